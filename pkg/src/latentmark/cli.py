"""Command line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 verification negative (no watermark found / not detected / not traced).
"""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import channel as ch
from .gs import GsParams, pack_payload, unpack_payload
from .keys import KeyFileError, PrcParams, UserDatabase, keygen, load_keys, save_keys
from .pipeline import WatermarkConfig, embed, extract, seed_fingerprint, watermarked_elements
from .prc import DecoderConfig
from .sampler import LatentFileError, load_latent, save_latent
from .stats import acc, audit_normality, calibrate_tau, trace

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NEGATIVE = 0, 1, 2, 3

log = logging.getLogger("latentmark")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _shape(text):
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError("shape must be ch,h,w")
    return dims


def _hex32(text):
    try:
        value = int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex number: {text!r}") from None
    if not 0 <= value < 2**32:
        raise argparse.ArgumentTypeError("user info must fit in 32 bits")
    return value


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def read_config(path):
    """Parse ``key = value`` lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _add_common(p, *, decoder=True):
    p.add_argument("--shape", type=_shape, default=(4, 64, 64), help="latent shape ch,h,w")
    p.add_argument("--f-ch", type=int, default=2)
    p.add_argument("--f-hw", type=int, default=4)
    p.add_argument("--mode", choices=("operator", "thirdparty"), default="operator")
    if decoder:
        p.add_argument("--decoder", choices=("soft", "exact", "hard"), default="soft")
        p.add_argument("--bp-iters", type=int, default=100)
        p.add_argument("--osd-order", type=int, default=0)
        p.add_argument("--llr-clamp", type=float, default=15.0)
        p.add_argument("--fail-threshold", type=float, default=0.35)


def build_parser():
    parser = _Parser(prog="latentmark", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file supplying option defaults")
    parser.add_argument("--seed", type=int, help="master RNG seed")
    parser.add_argument("--ci", action="store_true", help="require --seed (reproducible runs)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="generate a key set")
    p.add_argument("--keys", required=True, help="output key file")
    p.add_argument("--shape", type=_shape, default=(4, 64, 64))
    p.add_argument("--g", type=int, default=32)
    p.add_argument("--t", type=int, default=3)
    p.add_argument("--r", type=int)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--n-sk", type=int, default=256)
    p.add_argument("--signature", action="store_true", help="include an ECDSA key pair")

    p = sub.add_parser("enroll", help="add users to the watermark database")
    p.add_argument("--db", required=True)
    p.add_argument("--keys", help="key file; signs user info in third-party mode")
    p.add_argument("--mode", choices=("operator", "thirdparty"), default="operator")
    p.add_argument("--user-id", type=int)
    p.add_argument("--user-info", type=_hex32)
    p.add_argument("--random-users", type=int, default=0, help="enroll N users with random info")

    p = sub.add_parser("embed", help="sample a watermarked latent for a user")
    p.add_argument("--keys", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--user-id", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_common(p, decoder=False)

    p = sub.add_parser("extract", help="recover the watermark from a latent")
    p.add_argument("--keys", required=True)
    p.add_argument("--latent", required=True)
    p.add_argument("--db")
    p.add_argument("--user-id", type=int, help="claimed user for a bit-accuracy report")
    _add_common(p)

    p = sub.add_parser("detect", help="test a latent for a user's watermark")
    p.add_argument("--keys", required=True)
    p.add_argument("--latent", required=True)
    p.add_argument("--db")
    p.add_argument("--user-id", type=int)
    p.add_argument("--tau-fpr", type=float, default=1e-6)
    _add_common(p)

    p = sub.add_parser("trace", help="find the user a latent was generated for")
    p.add_argument("--keys", required=True)
    p.add_argument("--latent", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--tau-fpr", type=float, default=1e-6)
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo robustness sweep")
    p.add_argument("--keys", help="key file (generated from --seed when absent)")
    p.add_argument("--channel", action="append", choices=ch.KINDS[:-1],
                   help="channel kind; repeat to compose in order")
    p.add_argument("--sigma", action="append", type=float, default=None)
    p.add_argument("--p", action="append", type=float, default=None)
    p.add_argument("--factor", action="append", type=float, default=None)
    p.add_argument("--sweep", type=_floats, help="comma list replacing the first channel's parameter")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--users", type=int, default=0, help="size of a simulated user database")
    p.add_argument("--tau-fpr", type=float, default=1e-6)
    p.add_argument("--out", help="CSV output (stdout when absent)")
    _add_common(p)

    p = sub.add_parser("audit", help="normality audit of watermarked latents")
    p.add_argument("--samples", nargs="*", help="latent files to audit")
    p.add_argument("--keys", help="key file for generating latents")
    p.add_argument("--n-latents", type=int, default=100)
    p.add_argument("--user-info", type=_hex32, default=0, help="fixed payload user info")
    p.add_argument("--zero-stream-key", action="store_true", help=argparse.SUPPRESS)
    _add_common(p, decoder=False)
    return parser


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        values = read_config(known.config)
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        for sp in [parser, *subparsers.choices.values()]:
            relevant = {}
            for action in sp._actions:
                if action.dest in values:
                    val = values[action.dest]
                    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                        val = val.lower() in ("1", "true", "yes", "on")
                    elif isinstance(action, argparse._AppendAction):
                        val = [action.type(v) if action.type else v for v in val.split(",")]
                    relevant[action.dest] = val
            sp.set_defaults(**relevant)
    return parser.parse_args(argv)


def _config(args):
    return WatermarkConfig(
        shape=tuple(args.shape),
        gs=GsParams(f_ch=args.f_ch, f_hw=args.f_hw),
        mode=args.mode,
        decoder=DecoderConfig(
            bp_iters=getattr(args, "bp_iters", 100),
            osd_order=getattr(args, "osd_order", 0),
            llr_clamp=getattr(args, "llr_clamp", 15.0),
            fail_threshold=getattr(args, "fail_threshold", 0.35),
        ),
        method=getattr(args, "decoder", "soft"),
    )


def _seed(args):
    return args.seed if args.seed is not None else secrets.randbits(63)


def _emit(pairs, out=None):
    out = out or sys.stdout
    for key, value in pairs:
        print(f"{key}: {value}", file=out)


def _user_payload(db, user_id, q, ks, mode):
    return pack_payload(db.lookup(user_id), q, ks.signing_key, mode, signature=db.signature(user_id))


def cmd_keygen(args):
    params = PrcParams.for_shape(args.shape, g=args.g, t=args.t, r=args.r, eta=args.eta)
    ks = keygen(params, n_sk=args.n_sk, rng_seed=_seed(args), signature=args.signature)
    save_keys(ks, args.keys)
    _emit([("keys", args.keys), ("n", params.n), ("g", params.g), ("t", params.t),
           ("r", params.r), ("signature", ks.has_signature_keys)])
    return EXIT_OK


def cmd_enroll(args):
    db = UserDatabase.load(args.db) if Path(args.db).exists() else UserDatabase()
    sk = None
    if args.mode == "thirdparty":
        if not args.keys:
            raise UsageError("third-party enrollment needs --keys with a signing key")
        sk = load_keys(args.keys).signing_key
        if sk is None:
            raise UsageError("key file has no ECDSA signing key")
    added = 0
    if args.user_id is not None:
        if args.user_info is None:
            raise UsageError("--user-id needs --user-info")
        db.enroll(args.user_id, args.user_info, sk)
        added += 1
    if args.random_users:
        rng = np.random.default_rng(_seed(args))
        start = max(db.records, default=-1) + 1
        for uid in range(start, start + args.random_users):
            db.enroll(uid, int(rng.integers(0, 2**32)), sk)
            added += 1
    if not added:
        raise UsageError("nothing to enroll: give --user-id/--user-info or --random-users")
    db.save(args.db)
    _emit([("db", args.db), ("added", added), ("users", len(db))])
    return EXIT_OK


def cmd_embed(args):
    ks = load_keys(args.keys)
    db = UserDatabase.load(args.db)
    cfg = _config(args)
    cfg.check(ks)
    payload = _user_payload(db, args.user_id, cfg.q, ks, cfg.mode)
    emb = embed(ks, payload, cfg, _seed(args))
    save_latent(emb.latent, args.out)
    _emit([("latent", args.out), ("user_id", args.user_id), ("seed_fingerprint", emb.fingerprint)])
    return EXIT_OK


def _extract(args):
    ks = load_keys(args.keys)
    cfg = _config(args)
    cfg.check(ks)
    z = load_latent(args.latent)
    return ks, cfg, extract(ks, z, cfg)


def cmd_extract(args):
    ks, cfg, ex = _extract(args)
    info, sig_ok = unpack_payload(ex.bits, ks.verifying_key, cfg.mode)
    report = [("header", "ok" if ex.header_ok else "failure"),
              ("header_discrepancy", f"{ex.discrepancy:.4f}")]
    if ex.header_ok:
        report += [("seed_fingerprint", seed_fingerprint(ex.seed)),
                   ("payload", np.packbits(ex.bits).tobytes().hex()),
                   ("user_info", f"{info:08x}")]
        if cfg.mode == "thirdparty":
            report.append(("signature_valid", sig_ok))
    else:
        report += [("gs_positive_fraction", f"{ex.gs_positive_fraction:.4f}"),
                   ("gs_mean_abs_posterior", f"{ex.gs_mean_abs_posterior:.4f}")]
    if args.user_id is not None:
        if not args.db:
            raise UsageError("--user-id needs --db")
        db = UserDatabase.load(args.db)
        claimed = _user_payload(db, args.user_id, cfg.q, ks, cfg.mode)
        report.append(("bit_accuracy", f"{acc(claimed, ex.bits) / cfg.q:.6f}"))
    _emit(report)
    return EXIT_OK if ex.header_ok else EXIT_NEGATIVE


def cmd_detect(args):
    ks, cfg, ex = _extract(args)
    tau = calibrate_tau(cfg.q, args.tau_fpr)
    if args.user_id is not None:
        if not args.db:
            raise UsageError("--user-id needs --db")
        db = UserDatabase.load(args.db)
        matches = acc(_user_payload(db, args.user_id, cfg.q, ks, cfg.mode), ex.bits)
        detected = ex.header_ok and matches > tau
        _emit([("tau", tau), ("acc", matches), ("detected", detected)])
    elif cfg.mode == "thirdparty":
        info, sig_ok = unpack_payload(ex.bits, ks.verifying_key, "thirdparty")
        detected = ex.header_ok and bool(sig_ok)
        _emit([("user_info", f"{info:08x}"), ("signature_valid", sig_ok), ("detected", detected)])
    else:
        raise UsageError("operator-mode detection needs --db and --user-id")
    return EXIT_OK if detected else EXIT_NEGATIVE


def cmd_trace(args):
    ks, cfg, ex = _extract(args)
    db = UserDatabase.load(args.db)
    tau = calibrate_tau(cfg.q, args.tau_fpr, len(db))
    res = trace(db, ex.bits, tau, cfg.mode)
    passed = ex.header_ok and res.passed
    _emit([("users", len(db)), ("tau", tau), ("best_acc", res.best_acc),
           ("matched_user", res.matched_user if passed else "none")])
    return EXIT_OK if passed else EXIT_NEGATIVE


def _channel_specs(args):
    kinds = args.channel or ["awgn"]
    params = {"awgn": list(args.sigma or []), "scale": list(args.factor or []),
              "signflip": list(args.p or [])}
    params["resample"] = params["signflip"]  # --p is shared, consumed in order
    children = []
    for kind in kinds:
        queue = params[kind]
        if not queue:
            raise UsageError(f"channel {kind} is missing its parameter")
        children.append(ch.ChannelSpec(kind, queue.pop(0)))
    leftovers = [k for k, v in params.items() if v and k != "resample"]
    if leftovers:
        raise UsageError(f"unused channel parameters for {leftovers}")
    if args.sweep:
        first = children[0]
        return [ch.compose(ch.ChannelSpec(first.kind, v), *children[1:]) if len(children) > 1
                else ch.ChannelSpec(first.kind, v) for v in args.sweep]
    return [children[0] if len(children) == 1 else ch.compose(*children)]


def cmd_simulate(args):
    cfg = _config(args)
    seed = _seed(args)
    if args.keys:
        ks = load_keys(args.keys)
    else:
        ks = keygen(PrcParams.for_shape(cfg.shape), rng_seed=seed,
                    signature=cfg.mode == "thirdparty")
    cfg.check(ks)
    specs = _channel_specs(args)
    if args.users:
        source = UserDatabase()
        rng = np.random.default_rng([seed, 1])
        sk = ks.signing_key if cfg.mode == "thirdparty" else None
        for uid in range(args.users):
            source.enroll(uid, int(rng.integers(0, 2**32)), sk)
    else:
        source = pack_payload(0xA5A5A5A5, cfg.q, ks.signing_key, cfg.mode)
    tau = calibrate_tau(cfg.q, args.tau_fpr)
    trace_tau = calibrate_tau(cfg.q, args.tau_fpr, max(args.users, 1))
    groups = {}
    for k, spec in enumerate(specs):
        log.info("simulating %s", spec.label)
        groups[spec] = ch.run_trials(ks, source, spec, args.trials, rng_seed=seed + k, cfg=cfg,
                                     tau=tau, trace_tau=trace_tau)
    text = ch.sweep_report(groups)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_audit(args):
    if args.samples:
        z = np.concatenate([load_latent(p).ravel() for p in args.samples])
    else:
        if not args.keys:
            raise UsageError("audit needs --samples or --keys")
        ks = load_keys(args.keys)
        cfg = _config(args)
        cfg.check(ks)
        payload = pack_payload(args.user_info, cfg.q, ks.signing_key, cfg.mode)
        z = watermarked_elements(ks, payload, args.n_latents, cfg, _seed(args),
                                 zero_stream_key=args.zero_stream_key)
    rep = audit_normality(z)
    _emit([("elements", z.size), *[(k, f"{v:.6g}") for k, v in rep._asdict().items()]])
    return EXIT_OK


COMMANDS = {
    "keygen": cmd_keygen,
    "enroll": cmd_enroll,
    "embed": cmd_embed,
    "extract": cmd_extract,
    "detect": cmd_detect,
    "trace": cmd_trace,
    "simulate": cmd_simulate,
    "audit": cmd_audit,
}


def main(argv=None):
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"latentmark: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"latentmark: error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if (args.ci or os.environ.get("LATENTMARK_CI")) and args.seed is None:
        print("latentmark: error: --seed is mandatory in CI mode", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (KeyFileError, LatentFileError, OSError) as exc:
        print(f"latentmark: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError, KeyError) as exc:
        print(f"latentmark: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
