"""Command-line entry point wiring data generation, partitioning, training,
sampling, evaluation, and the benchmark harnesses.

Configuration comes from one declarative JSON file with per-command
sections; unknown keys are rejected, command-line flags override config
keys, and every run persists its fully resolved config next to its outputs.
Exit codes: 0 success, 1 user error, 2 numeric fault.  The environment
variable BLOCKDIFF_OUT sets the default output root for relative paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ContractViolation, NumericFault, ParseError
from .generators import generate_dataset
from .graph_io import read_dataset, read_manifest
from .graphs import Graph
from .metrics import MetricsReport, evaluate, memory_ratio, model_memory_ratio
from .partition import partition_cut, partition_graph
from .sampling import SampleConfig, sample_dataset
from .training import (TrainConfig, fit, instrumented_step_peak,
                       load_checkpoint)

OUTPUT_ROOT_ENV = "BLOCKDIFF_OUT"

_SCHEMA: dict[str, set] = {
    "out": None, "seed": None, "threads": None, "dataset": None,
    "datagen": {"kind", "count", "test_fraction", "n", "communities", "p_in",
                "p_out", "feature_dim", "mu", "p"},
    "train": {"learning_rate", "diffusion_steps", "schedule", "total_steps",
              "pairs_per_batch", "hidden", "layers", "heads",
              "target_block_size", "fixed_k", "balance_eps", "seed",
              "log_interval", "checkpoint_interval"},
    "sample": {"count", "k", "mode", "stride", "steps", "threshold", "seed",
               "size_source", "fixed_n"},
    "eval": {"reference", "generated", "train_dir", "validity", "sigma",
             "encoder_seed"},
    "size_sweep": {"checkpoint", "sizes", "samples_per_size",
                   "reference_count", "sample"},
    "partition_sweep": {"k_list", "samples_per_k", "train", "sample"},
    "membench": {"n", "block_size", "count", "datagen", "train",
                 "warmup_steps"},
    "partition": {"k", "balance_eps"},
}


def _check_keys(config: dict, path: str = "") -> None:
    for key, value in config.items():
        if key not in _SCHEMA:
            raise ContractViolation(f"unknown config key {path}{key!r}")
        allowed = _SCHEMA[key]
        if allowed is not None:
            if not isinstance(value, dict):
                raise ContractViolation(f"config section {path}{key!r} must be an object")
            for sub in value:
                if sub not in allowed and not (key in ("size_sweep", "partition_sweep",
                                                       "membench") and sub in ("train", "sample", "datagen")):
                    raise ContractViolation(f"unknown config key {path}{key}.{sub}")


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ContractViolation(f"config file not found: {path}")
    with open(path) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from None
    _check_keys(config)
    return config


def _resolve_out(out: str | None, default: str) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV, ".")
    out = out if out is not None else default
    path = out if os.path.isabs(out) else os.path.join(root, out)
    os.makedirs(path, exist_ok=True)
    return path


def _persist_config(config: dict, out_dir: str, command: str) -> str:
    resolved = {"command": command, **config}
    path = os.path.join(out_dir, "config.json")
    with open(path, "w") as fh:
        json.dump(resolved, fh, indent=2, default=str)
        fh.write("\n")
    return path


def _csv_write(path: str, header: str, rows: list[str], config_path: str) -> None:
    lines = [f"# config: {config_path}", header] + rows
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_split(directory: str, split: str | None = None) -> list[Graph]:
    if not os.path.isdir(directory):
        raise ContractViolation(f"dataset directory not found: {directory}")
    graphs = read_dataset(directory, split)
    if not graphs and split is not None:
        graphs = read_dataset(directory, None)
    if not graphs:
        raise ContractViolation(f"no graphs found under {directory}")
    return graphs


def cmd_gen_data(args) -> int:
    config = load_config(args.config)
    gen = dict(config.get("datagen", {}))
    if args.count is not None:
        gen["count"] = args.count
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    out_dir = _resolve_out(args.out or config.get("out"), "dataset")
    kind = gen.pop("kind", "csbm")
    count = gen.pop("count", 10)
    test_fraction = gen.pop("test_fraction", 0.2)
    cfg_path = _persist_config({"seed": seed, "out": out_dir,
                                "datagen": {"kind": kind, "count": count,
                                            "test_fraction": test_fraction, **gen}},
                               out_dir, "gen-data")
    generate_dataset(kind, count, out_dir, seed, test_fraction, **gen)
    manifest = read_manifest(out_dir)
    print(f"wrote {len(manifest['files'])} graphs to {out_dir} (config: {cfg_path})")
    return 0


def cmd_partition(args) -> int:
    config = load_config(args.config)
    section = config.get("partition", {})
    k = args.k if args.k is not None else section.get("k", 2)
    eps = args.balance_eps if args.balance_eps is not None else section.get("balance_eps", 0.1)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    dataset_dir = args.dataset or config.get("dataset")
    if dataset_dir is None:
        raise ContractViolation("partition needs --dataset")
    graphs = _load_split(dataset_dir)
    out_dir = _resolve_out(args.out or config.get("out"), "partitions")
    cfg_path = _persist_config({"dataset": dataset_dir, "seed": seed, "out": out_dir,
                                "partition": {"k": k, "balance_eps": eps}},
                               out_dir, "partition")
    lines = []
    cuts = []
    for idx, g in enumerate(graphs):
        part = partition_graph(g, min(k, g.n), eps, seed=seed + idx)
        lines.append(" ".join(str(int(b)) for b in part.assignment))
        cuts.append(str(partition_cut(g, part)))
    with open(os.path.join(out_dir, "partitions.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _csv_write(os.path.join(out_dir, "cuts.csv"), "graph,cut",
               [f"{i},{c}" for i, c in enumerate(cuts)], cfg_path)
    print(f"partitioned {len(graphs)} graphs at k={k}; cuts: {', '.join(cuts)}")
    return 0


def _train_config(section: dict, seed_override: int | None = None,
                  steps_override: int | None = None) -> TrainConfig:
    section = dict(section)
    if seed_override is not None:
        section["seed"] = seed_override
    if steps_override is not None:
        section["total_steps"] = steps_override
    return TrainConfig(**section)


def cmd_train(args) -> int:
    config = load_config(args.config)
    dataset_dir = args.dataset or config.get("dataset")
    if dataset_dir is None:
        raise ContractViolation("train needs --dataset or a dataset config key")
    graphs = _load_split(dataset_dir, "train")
    tc = _train_config(config.get("train", {}), args.seed, args.steps)
    out_dir = _resolve_out(args.out or config.get("out"), "run")
    _persist_config({"dataset": dataset_dir, "out": out_dir,
                     "train": tc.__dict__}, out_dir, "train")
    resume = load_checkpoint(args.resume) if args.resume else None
    ckpt = fit(graphs, tc, out_dir=out_dir, resume=resume)
    print(f"trained {ckpt.step} steps; checkpoint at "
          f"{os.path.join(out_dir, 'checkpoint.npz')}")
    return 0


def _sample_config(section: dict, args=None) -> tuple[SampleConfig, int]:
    section = dict(section)
    count = section.pop("count", 16)
    if args is not None:
        for key in ("k", "mode", "stride", "steps", "threshold", "seed", "fixed_n"):
            value = getattr(args, key, None)
            if value is not None:
                section[key] = value
        if args.count is not None:
            count = args.count
        if getattr(args, "fixed_n", None) is not None:
            section["size_source"] = "fixed"
    return SampleConfig(**section), count


def cmd_sample(args) -> int:
    config = load_config(args.config)
    ckpt_path = args.checkpoint or config.get("sample", {}).get("checkpoint")
    if ckpt_path is None or not os.path.exists(ckpt_path):
        raise ContractViolation(f"checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    sc, count = _sample_config(config.get("sample", {}), args)
    out_dir = _resolve_out(args.out or config.get("out"), "samples")
    _persist_config({"out": out_dir, "sample": {**sc.__dict__, "count": count,
                                                "checkpoint": ckpt_path}},
                    out_dir, "sample")
    graphs = sample_dataset(ckpt, count, sc, out_dir)
    sizes = sorted({g.n for g in graphs})
    print(f"sampled {count} graphs (sizes {sizes}) into {out_dir}")
    return 0


def _print_report(report: MetricsReport) -> None:
    print("metric            value")
    print("-" * 30)
    for name, value in (("degree MMD", report.mmd_degree),
                        ("clustering MMD", report.mmd_clustering),
                        ("orbit MMD", report.mmd_orbit),
                        ("spectrum MMD", report.mmd_spectrum),
                        ("avg MMD", report.avg_mmd),
                        ("FID", report.fid)):
        print(f"{name:<16}  {value:.6f}")
    if report.vun_fraction is not None:
        print(f"{'V.U.N':<16}  {report.vun_fraction:.6f}")
    if report.memory_ratio is not None:
        print(f"{'memory ratio':<16}  {report.memory_ratio:.6f}")


def cmd_eval(args) -> int:
    config = load_config(args.config)
    section = dict(config.get("eval", {}))
    ref_dir = args.reference or section.get("reference")
    gen_dir = args.generated or section.get("generated")
    if ref_dir is None or gen_dir is None:
        raise ContractViolation("eval needs --reference and --generated")
    validity = args.validity or section.get("validity")
    sigma = args.sigma if args.sigma is not None else section.get("sigma", 1.0)
    encoder_seed = (args.encoder_seed if args.encoder_seed is not None
                    else section.get("encoder_seed", 0))
    train_dir = args.train_dir or section.get("train_dir")
    reference = _load_split(ref_dir)
    generated = _load_split(gen_dir)
    train_set = _load_split(train_dir) if train_dir else None
    out_dir = _resolve_out(args.out or config.get("out"), "eval")
    cfg_path = _persist_config({"out": out_dir,
                                "eval": {"reference": ref_dir, "generated": gen_dir,
                                         "validity": validity, "sigma": sigma,
                                         "encoder_seed": encoder_seed,
                                         "train_dir": train_dir}}, out_dir, "eval")
    report = evaluate(reference, generated, sigma=sigma, encoder_seed=encoder_seed,
                      validity=validity, train_set=train_set,
                      threads=args.threads,
                      config={"reference": ref_dir, "generated": gen_dir})
    _print_report(report)
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    _csv_write(os.path.join(out_dir, "metrics.csv"), MetricsReport.CSV_HEADER,
               [report.to_csv_row()], cfg_path)
    return 0


def cmd_size_sweep(args) -> int:
    config = load_config(args.config)
    section = dict(config.get("size_sweep", {}))
    ckpt_path = args.checkpoint or section.get("checkpoint")
    if ckpt_path is None or not os.path.exists(ckpt_path):
        raise ContractViolation(f"checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    sizes = section.get("sizes", [16, 32, 64, 128])
    per_size = int(section.get("samples_per_size", 16))
    ref_count = int(section.get("reference_count", per_size))
    datagen = dict(config.get("datagen", {}))
    kind = datagen.pop("kind", "csbm")
    datagen.pop("count", None)
    datagen.pop("test_fraction", None)
    seed = config.get("seed", 0)
    block = ckpt.config.target_block_size
    out_dir = _resolve_out(args.out or config.get("out"), "size_sweep")
    cfg_path = _persist_config({"out": out_dir, "seed": seed,
                                "size_sweep": {"checkpoint": ckpt_path, "sizes": sizes,
                                               "samples_per_size": per_size,
                                               "reference_count": ref_count},
                                "datagen": {"kind": kind, **datagen}},
                               out_dir, "size-sweep")
    rows = []
    for s in sizes:
        if s < block:
            print(f"size {s} below block size {block}; skipped")
            rows.append(f"{s},skipped,,,,,")
            continue
        k = max(1, round(s / block))
        sc = SampleConfig(k=k, size_source="fixed", fixed_n=block,
                          seed=seed + s, **section.get("sample", {}))
        gen_dir = os.path.join(out_dir, f"samples_n{s}")
        generated = sample_dataset(ckpt, per_size, sc, gen_dir)
        ref_dir = os.path.join(out_dir, f"reference_n{s}")
        generate_dataset(kind, ref_count, ref_dir, seed + 7919 + s,
                         test_fraction=0.0, **{**datagen, "n": s})
        reference = read_dataset(ref_dir)
        report = evaluate(reference, generated, threads=args.threads)
        rows.append(f"{s},ok,{report.fid!r},{report.mmd_degree!r},"
                    f"{report.mmd_clustering!r},{report.mmd_orbit!r},"
                    f"{report.mmd_spectrum!r}")
        print(f"size {s}: every sample has {generated[0].n} nodes, "
              f"FID {report.fid:.4f}")
    _csv_write(os.path.join(out_dir, "size_sweep.csv"),
               "target_size,status,fid,mmd_degree,mmd_clustering,mmd_orbit,mmd_spectrum",
               rows, cfg_path)
    return 0


def cmd_partition_sweep(args) -> int:
    config = load_config(args.config)
    section = dict(config.get("partition_sweep", {}))
    dataset_dir = args.dataset or config.get("dataset")
    if dataset_dir is None:
        raise ContractViolation("partition-sweep needs a dataset")
    graphs = _load_split(dataset_dir, "train")
    reference = _load_split(dataset_dir, "test")
    k_list = section.get("k_list", [1, 2, 4, 8])
    per_k = int(section.get("samples_per_k", 16))
    base_train = dict(section.get("train", config.get("train", {})))
    out_dir = _resolve_out(args.out or config.get("out"), "partition_sweep")
    cfg_path = _persist_config({"dataset": dataset_dir, "out": out_dir,
                                "partition_sweep": {"k_list": k_list,
                                                    "samples_per_k": per_k,
                                                    "train": base_train}},
                               out_dir, "partition-sweep")
    min_n = min(g.n for g in graphs)
    rows = []
    for k in k_list:
        if k > min_n:
            print(f"k={k} exceeds smallest graph ({min_n} nodes); skipped")
            rows.append(f"{k},skipped,,,,,,")
            continue
        tc = TrainConfig(**{**base_train, "fixed_k": k})
        run_dir = os.path.join(out_dir, f"k{k}")
        os.makedirs(run_dir, exist_ok=True)
        ckpt = fit(graphs, tc, out_dir=run_dir)
        peak = instrumented_step_peak(graphs, tc)["peak_elements"]
        sc = SampleConfig(k=k, seed=tc.seed + k, **section.get("sample", {}))
        gen_dir = os.path.join(run_dir, "samples")
        generated = sample_dataset(ckpt, per_k, sc, gen_dir)
        report = evaluate(reference, generated, threads=args.threads)
        rows.append(f"{k},ok,{report.fid!r},{report.mmd_degree!r},"
                    f"{report.mmd_clustering!r},{report.mmd_orbit!r},"
                    f"{report.mmd_spectrum!r},{peak}")
        print(f"k={k}: peak {peak} elements, FID {report.fid:.4f}")
    _csv_write(os.path.join(out_dir, "partition_sweep.csv"),
               "k,status,fid,mmd_degree,mmd_clustering,mmd_orbit,mmd_spectrum,peak_memory",
               rows, cfg_path)
    return 0


def cmd_membench(args) -> int:
    config = load_config(args.config)
    section = dict(config.get("membench", {}))
    n = int(args.n if args.n is not None else section.get("n", 128))
    block = int(args.block_size if args.block_size is not None
                else section.get("block_size", 32))
    count = int(section.get("count", 4))
    warmup = int(section.get("warmup_steps", 2))
    seed = config.get("seed", 0)
    datagen = dict(section.get("datagen", config.get("datagen", {})))
    kind = datagen.pop("kind", "er")
    datagen.pop("count", None)
    datagen.pop("test_fraction", None)
    if kind == "er":
        datagen.setdefault("p", 0.15)
    out_dir = _resolve_out(args.out or config.get("out"), "membench")
    base_train = dict(section.get("train", config.get("train", {})))
    base_train.setdefault("pairs_per_batch", 1)
    base_train.setdefault("total_steps", warmup + 1)
    cfg_path = _persist_config({"out": out_dir, "seed": seed,
                                "membench": {"n": n, "block_size": block,
                                             "count": count, "warmup_steps": warmup,
                                             "train": base_train,
                                             "datagen": {"kind": kind, **datagen}}},
                               out_dir, "membench")
    gen_dir = os.path.join(out_dir, "bench_data")
    graphs = generate_dataset(kind, count, gen_dir, seed, test_fraction=0.0,
                              **{**datagen, "n": n})
    feature_dim = graphs[0].feature_dim
    baseline_cfg = TrainConfig(**{**base_train, "fixed_k": 1})
    sbgd_cfg = TrainConfig(**{**base_train, "fixed_k": None,
                              "target_block_size": block})
    baseline = instrumented_step_peak(graphs, baseline_cfg, warmup)
    sbgd = instrumented_step_peak(graphs, sbgd_cfg, warmup)
    ratio = memory_ratio(baseline["peak_elements"], sbgd["peak_elements"])
    model = model_memory_ratio(n, block, feature_dim)
    result = {"baseline_peak_elements": baseline["peak_elements"],
              "sbgd_peak_elements": sbgd["peak_elements"],
              "memory_ratio": ratio, "model_ratio": model,
              "ratio_over_model": ratio / model,
              "n": n, "block_size": block, "k": sbgd["k"],
              "feature_dim": feature_dim}
    with open(os.path.join(out_dir, "membench.json"), "w") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    _csv_write(os.path.join(out_dir, "membench.csv"),
               "baseline_peak,sbgd_peak,memory_ratio,model_ratio",
               [f"{baseline['peak_elements']},{sbgd['peak_elements']},"
                f"{ratio!r},{model!r}"], cfg_path)
    print(f"baseline peak: {baseline['peak_elements']} elements")
    print(f"block-diffusion peak: {sbgd['peak_elements']} elements")
    print(f"memory ratio: {ratio:.3f} (element-count model: {model:.3f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockdiff",
                                     description="block-space graph diffusion toolkit")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap for parallelizable stages")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, out=True, seed=True):
        if config:
            p.add_argument("--config")
        if out:
            p.add_argument("--out")
        if seed:
            p.add_argument("--seed", type=int)

    p = sub.add_parser("gen-data", help="materialize a synthetic dataset")
    common(p)
    p.add_argument("--count", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("partition", help="partition every graph in a dataset")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--k", type=int)
    p.add_argument("--balance-eps", type=float, dest="balance_eps")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("train", help="train the block denoiser")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--resume")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample graphs from a checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--count", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--fixed-n", type=int, dest="fixed_n")
    p.add_argument("--mode", choices=["ddpm", "ddim"])
    p.add_argument("--stride", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="compare generated graphs against a reference set")
    common(p, seed=False)
    p.add_argument("--reference")
    p.add_argument("--generated")
    p.add_argument("--train-dir", dest="train_dir")
    p.add_argument("--validity", choices=["planarity", "connectivity", "none"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--encoder-seed", type=int, dest="encoder_seed")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("size-sweep", help="sample and evaluate across target sizes")
    common(p, seed=False)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_size_sweep)

    p = sub.add_parser("partition-sweep", help="train/sample/eval across block counts")
    common(p, seed=False)
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_partition_sweep)

    p = sub.add_parser("membench", help="memory ratio of baseline vs block diffusion")
    common(p, seed=False)
    p.add_argument("--n", type=int)
    p.add_argument("--block-size", type=int, dest="block_size")
    p.set_defaults(func=cmd_membench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ContractViolation, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
