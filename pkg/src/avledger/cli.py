"""Command-line front end.

Subcommands:

    run         execute a scenario config and emit its report
    verify      recheck a saved ledger file end to end
    inspect     list transactions in a saved ledger, with filters
    adjudicate  run the liability rules over a saved ledger and a case file
    keys        generate a signing keypair

Exit codes are the machine contract: 0 success, 1 integrity or detection
failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from typing import Optional

from .adjudicator import (
    AdjudicationParams,
    CollisionCase,
    PartyEvidence,
    adjudicate,
)
from .errors import AvLedgerError, ConfigError, LedgerFormatError, MalformedCase
from .identity import generate_keypair
from .ledger import PartitionLedger, chain_faults, load_ledger, save_ledger
from .scenarios import (
    ScenarioEngine,
    config_from_jsonable,
    config_to_jsonable,
    load_config,
    make_attack_config,
    make_benign_config,
    AttackClass,
)
from .txmodel import (
    EstDigest,
    EvidenceRequestBody,
    TxKind,
    body_timestamp,
    tx_to_jsonable,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

KIND_NAMES = sorted(k.value for k in TxKind)


def _dump(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _fail_usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


# --- run ----------------------------------------------------------------------

def cmd_run(args: argparse.Namespace) -> int:
    try:
        if args.config is not None:
            config = load_config(args.config)
        elif args.attack is not None:
            attack = {a.value: a for a in AttackClass}.get(args.attack)
            if attack is None:
                return _fail_usage(
                    f"unknown attack class {args.attack!r}, expected one of "
                    f"{sorted(a.value for a in AttackClass)}"
                )
            config = make_attack_config(args.seed if args.seed is not None else 0, attack)
        else:
            config = make_benign_config(args.seed if args.seed is not None else 0)
        if args.config is not None and args.seed is not None:
            config = config_from_jsonable(
                {**config_to_jsonable(config), "seed": args.seed}
            )
    except FileNotFoundError:
        return _fail_usage(f"config file not found: {args.config}")
    except ConfigError as exc:
        return _fail_usage(str(exc))

    result = ScenarioEngine(config).run()
    report = result.report
    rendered = report.to_json()

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(rendered)
        with open(os.path.join(args.out, "audit.jsonl"), "w", encoding="utf-8") as fh:
            for line in result.audit_lines:
                fh.write(line + "\n")
        for name, ledger in sorted(result.ledgers.items()):
            save_ledger(ledger, os.path.join(args.out, f"ledger_{name.lower()}.bin"))
        print(f"report written to {os.path.join(args.out, 'report.json')}")
    else:
        print(rendered, end="")

    if report.attack_scripted is not None and not report.attack_detected:
        print(
            f"scripted attack {report.attack_scripted} went undetected",
            file=sys.stderr,
        )
        return EXIT_FAILURE
    return EXIT_OK


# --- verify -------------------------------------------------------------------

def cmd_verify(args: argparse.Namespace) -> int:
    try:
        ledger = load_ledger(args.ledger)
    except FileNotFoundError:
        return _fail_usage(f"ledger file not found: {args.ledger}")
    except LedgerFormatError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    faults = chain_faults(ledger)
    fault_scopes = {line.split(":", 1)[0].strip() for line in faults}

    def scope_ok(scope: str) -> bool:
        return not any(s == scope or s.startswith(scope + " ") for s in fault_scopes)

    if scope_ok("genesis"):
        print(f"genesis {ledger.genesis.block_id.hex()[:16]} ok ({ledger.partition.value})")
    for index, block in enumerate(ledger.blocks):
        scope = f"block {index}"
        if scope_ok(scope):
            print(f"{scope}: ok ({len(block.transactions)} tx, id {block.block_id.hex()[:16]})")
    if scope_ok("current block") and scope_ok("current tx"):
        n = len(ledger.current.transactions)
        print(f"current block: ok ({n} tx, id {ledger.cblock_id.hex()[:16]})")

    if faults:
        print(f"invalid: {faults[0]}", file=sys.stderr)
        for line in faults[1:]:
            print(f"  also: {line}", file=sys.stderr)
        return EXIT_FAILURE
    print("chain ok")
    return EXIT_OK


# --- inspect ------------------------------------------------------------------

def cmd_inspect(args: argparse.Namespace) -> int:
    kind: Optional[TxKind] = None
    if args.kind is not None:
        try:
            kind = TxKind(args.kind)
        except ValueError:
            return _fail_usage(
                f"unknown kind {args.kind!r}, expected one of {KIND_NAMES}"
            )
    cert_id: Optional[bytes] = None
    if args.cert is not None:
        try:
            cert_id = bytes.fromhex(args.cert)
        except ValueError:
            return _fail_usage(f"certificate id must be hex, got {args.cert!r}")
        if len(cert_id) != 32:
            return _fail_usage("certificate id must be 32 bytes of hex")

    try:
        ledger = load_ledger(args.ledger)
    except FileNotFoundError:
        return _fail_usage(f"ledger file not found: {args.ledger}")
    except LedgerFormatError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    matches = ledger.query(kind=kind, cert_id=cert_id)
    if args.json:
        print(_dump([tx_to_jsonable(tx) for tx in matches]))
        return EXIT_OK
    if not matches:
        print("no matching transactions")
        return EXIT_OK
    print(f"{'kind':<5} {'timestamp':>12}  {'tid':<16} {'cert':<16} signers")
    for tx in matches:
        signers = "+".join(entry.role.value for entry in tx.signatures)
        print(
            f"{tx.kind.value:<5} {body_timestamp(tx):>12.3f}  "
            f"{tx.tid.hex()[:16]} {tx.cert.cert_id.hex()[:16]} {signers}"
        )
    return EXIT_OK


# --- adjudicate ---------------------------------------------------------------

def _hash_from_hex(value, path: str) -> bytes:
    if not isinstance(value, str):
        raise ConfigError(path, "expected a hex string")
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        raise ConfigError(path, f"not valid hex: {value!r}") from None
    if len(raw) != 32:
        raise ConfigError(path, "expected 32 bytes of hex")
    return raw


def _case_from_jsonable(data: dict, ledger: PartitionLedger) -> CollisionCase:
    """Builds a case whose evidence is entirely resolved from the ledger:
    submitted copies come out of referenced RET transactions and safety
    history out of the parties' certificate trails.
    """
    if not isinstance(data, dict):
        raise ConfigError("$", "case file must be a JSON object")
    for key in ("case_id", "collision_at", "parties"):
        if key not in data:
            raise ConfigError(f"$.{key}", "missing required field")
    if not isinstance(data["parties"], list) or not data["parties"]:
        raise ConfigError("$.parties", "expected a non-empty list")

    parties = []
    for i, raw in enumerate(data["parties"]):
        path = f"$.parties[{i}]"
        if not isinstance(raw, dict):
            raise ConfigError(path, "expected an object")
        vehicle = raw.get("vehicle")
        if not isinstance(vehicle, str):
            raise ConfigError(f"{path}.vehicle", "expected an entity id string")
        cert_ids = frozenset(
            _hash_from_hex(c, f"{path}.cert_ids[{j}]")
            for j, c in enumerate(raw.get("cert_ids", []))
        )
        pet_tid = None
        if raw.get("pet_tid") is not None:
            pet_tid = _hash_from_hex(raw["pet_tid"], f"{path}.pet_tid")
            if ledger.find(pet_tid) is None:
                raise MalformedCase(f"party {vehicle}: pet_tid not on the ledger")
        submitted = {}
        ret_tids = {}
        rets_raw = raw.get("ret_tids", {})
        if not isinstance(rets_raw, dict):
            raise ConfigError(f"{path}.ret_tids", "expected an object")
        for submitter in sorted(rets_raw):
            tid = _hash_from_hex(rets_raw[submitter], f"{path}.ret_tids[{submitter}]")
            ret = ledger.find(tid)
            if ret is None or not isinstance(ret.body, EvidenceRequestBody):
                raise MalformedCase(
                    f"party {vehicle}: {submitter} evidence request not on the ledger"
                )
            submitted[submitter] = ret.body.edata
            ret_tids[submitter] = tid
        est_digests = []
        for cid in sorted(cert_ids):
            for tx in ledger.query(kind=TxKind.EVENT_SAFETY, cert_id=cid):
                est_digests.append(
                    EstDigest(tid=tx.tid, ts=tx.body.ts, trigger=tx.body.esm.trigger)
                )
        est_digests.sort(key=lambda d: (d.ts, d.tid))
        parties.append(
            PartyEvidence(
                vehicle=vehicle,
                cert_ids=cert_ids,
                pet_tid=pet_tid,
                submitted=submitted,
                ret_tids=ret_tids,
                est_digests=tuple(est_digests),
            )
        )

    witness_tids = tuple(
        _hash_from_hex(t, f"$.witness_pet_tids[{j}]")
        for j, t in enumerate(data.get("witness_pet_tids", []))
    )
    collision_at = data["collision_at"]
    if not isinstance(collision_at, (int, float)) or isinstance(collision_at, bool):
        raise ConfigError("$.collision_at", "expected a number")
    suspect_absent = data.get("suspect_absent", False)
    if not isinstance(suspect_absent, bool):
        raise ConfigError("$.suspect_absent", "expected a boolean")
    return CollisionCase(
        case_id=str(data["case_id"]),
        collision_at=float(collision_at),
        parties=tuple(parties),
        maker=str(data.get("maker", "am-0")),
        witness_pet_tids=witness_tids,
        suspect_absent=suspect_absent,
    )


def cmd_adjudicate(args: argparse.Namespace) -> int:
    try:
        ledger = load_ledger(args.ledger)
    except FileNotFoundError:
        return _fail_usage(f"ledger file not found: {args.ledger}")
    except LedgerFormatError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        with open(args.case, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        return _fail_usage(f"case file not found: {args.case}")
    except json.JSONDecodeError as exc:
        return _fail_usage(f"case file is not valid JSON: {exc}")

    try:
        case = _case_from_jsonable(data, ledger)
    except ConfigError as exc:
        return _fail_usage(str(exc))
    except MalformedCase as exc:
        print(f"unresolvable evidence: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    try:
        verdict = adjudicate(case, ledger, AdjudicationParams(), at=args.at)
    except MalformedCase as exc:
        print(f"case not adjudicable: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(_dump(verdict.to_jsonable()))
    return EXIT_OK


# --- keys ---------------------------------------------------------------------

def cmd_keys(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else random.SystemRandom().getrandbits(64)
    keys = generate_keypair(random.Random(seed))
    out = {"public_key": keys.public_key.hex(), "secret_key": keys.secret_key.hex()}
    if args.json:
        print(_dump(out))
    else:
        print(f"public:  {out['public_key']}")
        print(f"secret:  {out['secret_key']}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avledger",
        description="Two-partition liability-evidence ledger simulator.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_run = sub.add_parser("run", help="execute a scenario and emit its report")
    p_run.add_argument("config", nargs="?", default=None, help="scenario config JSON")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument(
        "--attack",
        default=None,
        help="run a canned attack scenario instead of a config file",
    )
    p_run.add_argument("--out", default=None, help="directory for report, audit log, and ledgers")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="recheck a saved ledger end to end")
    p_verify.add_argument("ledger", help="ledger file")
    p_verify.set_defaults(func=cmd_verify)

    p_inspect = sub.add_parser("inspect", help="list transactions in a saved ledger")
    p_inspect.add_argument("ledger", help="ledger file")
    p_inspect.add_argument("--kind", default=None, help=f"filter by kind ({', '.join(KIND_NAMES)})")
    p_inspect.add_argument("--cert", default=None, help="filter by certificate id (hex)")
    p_inspect.add_argument("--json", action="store_true", help="JSON output with sorted keys")
    p_inspect.set_defaults(func=cmd_inspect)

    p_adj = sub.add_parser("adjudicate", help="run the liability rules over a case file")
    p_adj.add_argument("ledger", help="operational-partition ledger file")
    p_adj.add_argument("case", help="collision case JSON")
    p_adj.add_argument("--at", type=float, default=None, help="query time for deadline checks")
    p_adj.set_defaults(func=cmd_adjudicate)

    p_keys = sub.add_parser("keys", help="generate a signing keypair")
    p_keys.add_argument("--seed", type=int, default=None, help="deterministic generation seed")
    p_keys.add_argument("--json", action="store_true", help="JSON output")
    p_keys.set_defaults(func=cmd_keys)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand == "run" and args.config is None and args.attack is None and args.seed is None:
        return _fail_usage("run needs a config file, or --seed / --attack for a canned scenario")
    try:
        return args.func(args)
    except AvLedgerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
