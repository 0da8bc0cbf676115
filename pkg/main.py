#!/usr/bin/env python3
"""
GMAC shaping toolkit - command line front end.
Capacity tables, constellation search, LDPC design, code construction and
BER simulation for the two-user Gaussian multiple access channel.
"""
import os
import sys
import json
import argparse

import numpy as np
from pydantic import ValidationError

# Import configuration
from config import (QUICK_BLOCKLENGTH, QUICK_FRAME_BUDGET, BLOCKLENGTH, setup_logging, ensure_dirs)

# Import toolkit modules
from gmac.errors import (GmacError, ConfigError, ConstellationError, DomainError, OptimizationError)
from gmac.models import (CapacityConfig, OptimizeConfig, DesignConfig, ConstructConfig, SimConfig,
                         RunManifest, config_hash)
from gmac.constellation import (resolve_constellations, named_constellation, pair_capacity,
                                per_level_capacities, gaussian_sum_capacity, snr_to_noise_var,
                                optimize_constellations, dump_constellations, calibrate_snr_convention)
from gmac.codedesign import design_all_levels, load_bundle, reference_bundle, save_bundle, REFERENCE_BUNDLES
from gmac.exit import decoding_threshold, TRACE_FIELDS
from gmac.ldpc import encode, syndrome_ok
from gmac.sim import CodeSet, sweep_snr
from utils.storage import StorageManager, timestamp

USAGE_ERRORS = (ConfigError, DomainError, ConstellationError, ValidationError)


def load_config(model_cls, config_path=None, **overrides):
    """
    Read a JSON run configuration and apply flag overrides (flags win).

    Returns:
        BaseModel: validated configuration
    """
    data = {}
    if config_path:
        try:
            with open(config_path, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {config_path}: {e}") from None
    data.update({k: v for k, v in overrides.items() if v is not None})
    return model_cls.model_validate(data)


def _label(spec):
    return os.path.splitext(os.path.basename(spec))[0] if os.path.exists(spec) else spec.upper()


def _resolve_bundle(ref, storage):
    if os.path.exists(ref):
        return load_bundle(ref)
    if ref.upper() in REFERENCE_BUNDLES:
        return reference_bundle(ref)
    bundle = storage.load_design(ref)
    if bundle is None:
        raise ConfigError(f"bundle: no design file, reference or stored ID named {ref!r}")
    return bundle


def run_command(command, config, out_dir, body, seed=None):
    """Create the run directory, execute body and write the run's single manifest."""
    storage = StorageManager()
    run_dir = storage.create_run_dir(command, out_dir)
    started = timestamp()
    storage.write_json(os.path.join(run_dir, "config.json"), config.model_dump(mode="json"))
    outputs = ["config.json"] + list(body(config, run_dir, storage))
    manifest = RunManifest(command=command, config_hash=config_hash(config), seed=seed,
                           started_at=started, finished_at=timestamp(), outputs=outputs)
    storage.write_manifest(run_dir, manifest)
    print(f"\n✅ {command} complete. Outputs in: {run_dir}")
    return run_dir


# --- Commands -----------------------------------------------------------------------

def cmd_capacity(config: CapacityConfig, run_dir, storage):
    """Sum and per-level capacities per constellation and SNR, with the Gaussian bound."""
    pairs = {_label(spec): resolve_constellations(spec) for spec in config.constellations}
    max_levels = max(c1.L for c1, _ in pairs.values())
    level_fields = [f"level_{i}" for i in range(1, max_levels + 1)]
    fields = ["constellation", "snr_db", "noise_var", "sum_capacity"] + level_fields + ["gaussian_bound"]
    rows = []
    for snr_db in config.snr_db:
        noise_var = snr_to_noise_var(snr_db, config.convention)
        for name, (c1, c2) in pairs.items():
            levels = per_level_capacities(c1, c2, noise_var, config.order)
            row = {"constellation": name, "snr_db": snr_db, "noise_var": noise_var,
                   "sum_capacity": pair_capacity(c1, c2, noise_var),
                   "gaussian_bound": gaussian_sum_capacity(noise_var)}
            row.update({f"level_{i + 1}": value for i, value in enumerate(levels)})
            rows.append(row)
            print(f"✓ {name:>8} @ {snr_db:6.2f} dB: sum capacity {row['sum_capacity']:.4f} bpcu, "
                  f"levels {', '.join(f'{v:.4f}' for v in levels)}")
    storage.write_csv(os.path.join(run_dir, "capacity.csv"), rows, fields)
    return ["capacity.csv"]


def cmd_optimize_constellation(config: OptimizeConfig, run_dir, storage):
    """Constellation search at one SNR, compared against MC and SP."""
    noise_var = snr_to_noise_var(config.snr_db, config.convention)
    print(f"\n🔍 Searching L={config.L} constellations at {config.snr_db} dB...")
    path = os.path.join(run_dir, "constellation.json")
    try:
        c1, c2 = optimize_constellations(noise_var, config.L, config.seed_grid, config.keep,
                                         config.sweeps, config.threads, config.seed)
    except OptimizationError as e:
        if e.best is not None:
            dump_constellations(*e.best, path, capacity=e.capacity, snr_db=config.snr_db, converged=False)
            print(f"⚠️ Best pair found so far saved to {path} (capacity {e.capacity:.4f})")
        raise
    capacity = pair_capacity(c1, c2, noise_var)
    comparison = {}
    if config.L == 2:
        comparison = {name: pair_capacity(*named_constellation(name), noise_var) for name in ("MC", "SP")}
    dump_constellations(c1, c2, path, capacity=capacity, snr_db=config.snr_db,
                        convention=config.convention, comparison=comparison)
    print(f"✓ Capacity {capacity:.4f} bpcu")
    print(f"   User 1: {np.round(c1.points, 3).tolist()}")
    print(f"   User 2: {np.round(c2.points, 3).tolist()}")
    for name, value in comparison.items():
        print(f"   {name}: {value:.4f} bpcu (gain {capacity - value:+.4f})")
    return ["constellation.json"]


def cmd_design(config: DesignConfig, run_dir, storage):
    """Rate allocation and LP design for every level, saved as a bundle."""
    c1, c2 = resolve_constellations(config.constellation)
    name = _label(config.constellation)
    print(f"\n🧠 Designing {name} codes at {config.snr_db} dB...")
    bundle = design_all_levels(c1, c2, config.snr_db, config.dc, tuple(config.dc_range), config.v_max,
                               config.delta, config.rounds, config.convention, config.order,
                               config.threads, name)
    outputs = []
    for level, reason in bundle.failures.items():
        print(f"⚠️ Level {level}: {reason}")
    for code in bundle.codes:
        print(f"✓ User {code.user} level {code.level}: d_c={code.d_c}, rate {code.design_rate:.4f}")
    for key, rows in bundle.traces.items():
        trace_path = os.path.join(run_dir, f"trace_{key}.csv")
        storage.write_csv(trace_path, rows, TRACE_FIELDS)
        outputs.append(os.path.basename(trace_path))
    bundle.id = f"{name.lower()}_{config.snr_db:g}db"
    save_bundle(bundle, os.path.join(run_dir, "design.json"))
    storage.save_design(bundle, bundle.id)
    print(f"📊 Sum rate {bundle.sum_rate:.4f} of sum capacity {bundle.sum_capacity:.4f} bpcu")
    if not bundle.codes:
        raise GmacError("No level could be designed")
    return ["design.json"] + outputs


def cmd_construct(config: ConstructConfig, run_dir, storage, messages=100):
    """PEG graphs for every code of a bundle with a rank and encoder report."""
    bundle = _resolve_bundle(config.bundle, storage)
    print(f"\n🔧 Constructing n={config.n} codes for {bundle.id or bundle.constellation}...")
    code_set = CodeSet.construct(bundle, config.n, config.seed)
    graph_paths = code_set.save(os.path.join(run_dir, "graphs"))
    save_bundle(bundle, os.path.join(run_dir, "bundle.json"))
    rng = np.random.default_rng(config.seed)
    rows = []
    for codes in code_set.levels:
        for user in (1, 2):
            encoder, graph = codes.encoders[user - 1], codes.graphs[user - 1]
            valid = all(syndrome_ok(graph, encode(encoder, rng.integers(0, 2, encoder.k, dtype=np.uint8)))
                        for _ in range(messages))
            design = bundle.code(user, codes.level).design_rate
            rows.append({"user": user, "level": codes.level, "n": graph.n, "m": graph.m,
                         "rank": encoder.rank, "k": encoder.k, "realized_rate": encoder.rate,
                         "design_rate": design, "deviation": encoder.rate - design,
                         "encoder_ok": valid})
            marker = "✓" if valid else "❌"
            print(f"{marker} User {user} level {codes.level}: rank {encoder.rank}/{graph.m}, "
                  f"rate {encoder.rate:.4f} (design {design:.4f})")
    storage.write_csv(os.path.join(run_dir, "construct.csv"), rows, list(rows[0]))
    return ["bundle.json", "construct.csv"] + [os.path.relpath(p, run_dir) for p in graph_paths]


def cmd_simulate(config: SimConfig, run_dir, storage, quick=False):
    """BER sweep; builds the codes in memory when no graphs directory is given."""
    bundle = _resolve_bundle(config.bundle, storage)
    if config.graphs_dir:
        code_set = CodeSet.load(bundle, config.graphs_dir)
    else:
        n = QUICK_BLOCKLENGTH if quick else BLOCKLENGTH
        print(f"🔧 No graphs given; constructing n={n} codes (seed {config.seed})")
        code_set = CodeSet.construct(bundle, n, config.seed)
    channel = config.channel_constellation or bundle.constellation
    print(f"\n📡 Simulating {bundle.constellation}/{channel} at {config.snr_db} dB...")
    report = sweep_snr(config, os.path.join(run_dir, "ber.csv"), code_set)
    for snr, ber in report.averaged().items():
        print(f"✓ {snr:6.2f} dB: average BER {ber:.3e}")
    return ["ber.csv", "ber.json"]


def cmd_calibrate(config, run_dir, storage):
    convention, capacities = calibrate_snr_convention()
    for name, value in capacities.items():
        marker = "✓" if name == convention else " "
        print(f"{marker} {name:>8}: MC sum capacity at 10 dB = {value:.4f} bpcu")
    storage.write_json(os.path.join(run_dir, "calibration.json"),
                       {"convention": convention, "capacities": capacities})
    return ["calibration.json"]


def cmd_threshold(config, run_dir, storage):
    bundle = _resolve_bundle(config["bundle"], storage)
    c1, c2 = resolve_constellations(bundle.points or bundle.constellation)
    results = {}
    for level in bundle.levels:
        pair = (bundle.code(1, level).distribution(), bundle.code(2, level).distribution())
        threshold = decoding_threshold(c1, c2, level, *pair, config["lo"], config["hi"], config["tol"],
                                       bundle.snr_convention, bundle.order)
        results[str(level)] = threshold
        print(f"✓ Level {level}: threshold {threshold:.3f} dB (design {bundle.dsnr_db} dB)")
    storage.write_json(os.path.join(run_dir, "threshold.json"), results)
    return ["threshold.json"]


def list_designs():
    """List stored and reference design bundles."""
    docs = StorageManager().list_designs()
    if not docs:
        print("📂 No design bundles found.")
        print("💡 Create one using: python main.py design --constellation MC --snr 10")
        return []
    print(f"📂 Found {len(docs)} design bundles:")
    for i, doc in enumerate(docs, 1):
        print(f"{i}. ID: {doc['id']}")
        print(f"   {doc['constellation']} @ {doc['dsnr_db']} dB, sum rate {doc['sum_rate']} "
              f"(capacity {doc['sum_capacity']})")
    return docs


class _Plain:
    """Minimal config object for commands without a schema."""

    def __init__(self, data):
        self.data = data

    def __getitem__(self, key):
        return self.data[key]

    def model_dump(self, mode=None):
        return dict(self.data)


# --- Argument parsing ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(description="Two-user GMAC shaping and LDPC design toolkit")
    parser.add_argument("--log-level", help="Logging level (default from GMAC_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    def add(name, help_text):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", help="JSON run configuration")
        sub.add_argument("--out", help="Output directory (default: a new directory under data/runs)")
        return sub

    cap = add("capacity", "Sum and per-level capacities over an SNR grid")
    cap.add_argument("--constellation", action="append", help="MC, SP, OPT or a constellation JSON (repeatable)")
    cap.add_argument("--snr", nargs="+", type=float, help="SNR points in dB")
    cap.add_argument("--convention", choices=["per_user", "total"])
    cap.add_argument("--order", nargs="+", type=int, help="Decoding order of the levels")

    opt = add("optimize-constellation", "Search the capacity-maximizing constellation pair")
    opt.add_argument("--snr", type=float)
    opt.add_argument("--L", type=int)
    opt.add_argument("--seed-grid", type=int)
    opt.add_argument("--keep", type=int)
    opt.add_argument("--sweeps", type=int)
    opt.add_argument("--seed", type=int)
    opt.add_argument("--threads", type=int)

    des = add("design", "Design LDPC degree distributions for every level")
    des.add_argument("--constellation", help="MC, SP, OPT or a constellation JSON")
    des.add_argument("--snr", type=float, help="Design SNR in dB")
    des.add_argument("--dc", nargs="+", type=int, help="Fixed check degree per level")
    des.add_argument("--dc-range", nargs=2, type=int, help="Check degrees searched when --dc is absent")
    des.add_argument("--v-max", type=int)
    des.add_argument("--delta", type=float)
    des.add_argument("--rounds", type=int)
    des.add_argument("--threads", type=int)
    des.add_argument("--order", nargs="+", type=int)

    con = add("construct", "Build PEG graphs and encoders for a design bundle")
    con.add_argument("--bundle", help="Bundle file, stored ID, or reference name (MC-10, MC-18, OPT-18)")
    con.add_argument("--n", type=int)
    con.add_argument("--seed", type=int)

    sim = add("simulate", "BER sweep of a constructed design")
    sim.add_argument("--bundle")
    sim.add_argument("--graphs-dir")
    sim.add_argument("--channel", help="Channel constellation when it differs from the design one")
    sim.add_argument("--snr", nargs="+", type=float)
    sim.add_argument("--frames", type=int)
    sim.add_argument("--error-target", type=int)
    sim.add_argument("--max-iter", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--threads", type=int)
    sim.add_argument("--genie", action="store_true", default=None, help="Condition SIC on the true bits")
    sim.add_argument("--quick", action="store_true", help=f"n={QUICK_BLOCKLENGTH}, {QUICK_FRAME_BUDGET} frames/point")

    add("calibrate", "Pin the SNR convention against the MC sum capacity")

    thr = add("threshold", "EXIT decoding thresholds of a design bundle")
    thr.add_argument("--bundle", required=True)
    thr.add_argument("--lo", type=float, default=-5.0)
    thr.add_argument("--hi", type=float, default=30.0)
    thr.add_argument("--tol", type=float, default=0.01)

    subparsers.add_parser("list", help="List design bundles")

    srv = subparsers.add_parser("serve", help="Run the HTTP service")
    srv.add_argument("--host", default="0.0.0.0")
    srv.add_argument("--port", type=int, default=8000)
    return parser


def dispatch(args):
    if args.command == "capacity":
        config = load_config(CapacityConfig, args.config, constellations=args.constellation,
                             snr_db=args.snr, convention=args.convention, order=args.order)
        return run_command("capacity", config, args.out, cmd_capacity)
    if args.command == "optimize-constellation":
        config = load_config(OptimizeConfig, args.config, snr_db=args.snr, L=args.L, seed_grid=args.seed_grid,
                             keep=args.keep, sweeps=args.sweeps, seed=args.seed, threads=args.threads)
        return run_command("optimize-constellation", config, args.out, cmd_optimize_constellation, config.seed)
    if args.command == "design":
        config = load_config(DesignConfig, args.config, constellation=args.constellation, snr_db=args.snr,
                             dc=args.dc, dc_range=args.dc_range, v_max=args.v_max, delta=args.delta,
                             rounds=args.rounds, threads=args.threads, order=args.order)
        return run_command("design", config, args.out, cmd_design)
    if args.command == "construct":
        config = load_config(ConstructConfig, args.config, bundle=args.bundle, n=args.n, seed=args.seed)
        return run_command("construct", config, args.out, cmd_construct, config.seed)
    if args.command == "simulate":
        quick_frames = QUICK_FRAME_BUDGET if args.quick and args.frames is None else args.frames
        config = load_config(SimConfig, args.config, bundle=args.bundle, graphs_dir=args.graphs_dir,
                             channel_constellation=args.channel, snr_db=args.snr, frames=quick_frames,
                             error_target=args.error_target, max_iter=args.max_iter, seed=args.seed,
                             threads=args.threads, genie=args.genie)
        body = lambda cfg, run_dir, storage: cmd_simulate(cfg, run_dir, storage, quick=args.quick)
        return run_command("simulate", config, args.out, body, config.seed)
    if args.command == "calibrate":
        return run_command("calibrate", _Plain({}), args.out, cmd_calibrate)
    if args.command == "threshold":
        config = _Plain({"bundle": args.bundle, "lo": args.lo, "hi": args.hi, "tol": args.tol})
        return run_command("threshold", config, args.out, cmd_threshold)
    if args.command == "list":
        return list_designs()
    if args.command == "serve":
        import uvicorn
        uvicorn.run("api.main:app", host=args.host, port=args.port)
        return None
    raise ConfigError("No command given")


def main(argv=None):
    """Parse arguments, run the command and map failures to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    if not args.command:
        parser.print_help()
        print("\n💡 To get started, try the capacity table:")
        print("   python main.py capacity --constellation MC --snr 10 18")
        return 1
    ensure_dirs()
    try:
        dispatch(args)
    except USAGE_ERRORS as e:
        print(f"❌ Invalid input: {e}")
        return 1
    except GmacError as e:
        print(f"❌ {type(e).__name__}: {e}")
        binding = getattr(e, "binding", None)
        if binding:
            print(f"   Binding grid points: {binding}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
