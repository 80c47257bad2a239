"""File-level pipeline stages and the cached end-to-end runner behind the CLI."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .attention import extract_attention, rank_attention, read_matrix, write_matrix
from .baselines import all_baselines, baselines_json
from .cascade import generate_dataset, read_traces, write_traces
from .dual import DEFAULT_GMAX, read_pairs, split_dataset, transform_split, write_pairs
from .errors import GridCascadeError, ParseError, ValidationError
from .evaluation import DEFAULT_TOP_X, comparison_report, emit_report
from .grid import SynthSpec, load_network, synthesize_network, write_network
from .model import ModelConfig, PROFILES, evaluate_model, load_checkpoint, save_checkpoint, train

log = logging.getLogger(__name__)


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: no such file") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc


def write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# ---- stages -----------------------------------------------------------------

def synth_stage(out, buses: int, seed: int, **spec) -> None:
    write_network(synthesize_network(SynthSpec(buses, **spec), seed), out)


def generate_stage(network_path, out, samples: int, k_min: int = 2, k_max: int = 8, seed: int = 0,
                   workers: int = 1) -> None:
    net = load_network(network_path)
    write_traces(generate_dataset(net, samples, k_min, k_max, seed, workers), out)


def transform_stage(dataset, out_dir, n_lines: int, g_max: int = DEFAULT_GMAX, split=(0.6, 0.2, 0.2),
                    seed: int = 0) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traces = read_traces(dataset)
    sp = split_dataset(traces, split, seed)
    pairs = transform_split(sp, n_lines, g_max)
    for name, ps in pairs.items():
        write_pairs(ps, out_dir / f"{name}.jsonl")
    # evaluation needs whole held-out traces, not pairs
    write_traces(sp.test, out_dir / "test_traces.jsonl")
    manifest = {
        "n_lines": n_lines,
        "g_max": g_max,
        "seed": seed,
        "split": list(split),
        "traces": {k: len(getattr(sp, k)) for k in ("train", "val", "test")},
        "pairs": {k: len(v) for k, v in pairs.items()},
    }
    write_json(manifest, out_dir / "manifest.json")
    return manifest


def model_config(doc: dict, data_dir=None, seed: int | None = None, precision: str | None = None) -> ModelConfig:
    """ModelConfig from a JSON mapping; an optional ``profile`` key supplies defaults."""
    doc = dict(doc)
    base = dict(PROFILES[doc.pop("profile")]) if "profile" in doc else {}
    if data_dir is not None:
        manifest = read_json(Path(data_dir) / "manifest.json")
        base.update(n_lines=manifest["n_lines"], g_max=manifest["g_max"])
    base.update(doc)
    if seed is not None:
        base["seed"] = seed
    if precision is not None:
        base["value_precision"] = precision
    if "n_lines" not in base:
        raise ValidationError("model config needs n_lines (or a data directory with a manifest)")
    return ModelConfig.from_dict(base)


def train_stage(data_dir, config: ModelConfig, out, history_out=None) -> dict:
    data_dir = Path(data_dir)
    res = train(config, read_pairs(data_dir / "train.jsonl"), read_pairs(data_dir / "val.jsonl"))
    history = {"train_loss": res.train_loss, "val_loss": res.val_loss}
    save_checkpoint(res.params, config, out, extra={"history": history})
    if history_out is not None:
        write_json(history, history_out)
    return history


def eval_stage(model, data, report) -> dict:
    params, config, _ = load_checkpoint(model)
    doc = evaluate_model(params, config, read_pairs(data))
    write_json(doc, report)
    return doc


def extract_stage(model, data, out_dir, workers: int = 1) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params, config, _ = load_checkpoint(model)
    cm = extract_attention(params, config, read_pairs(data), workers)
    write_matrix(cm.ICM, "ICM", cm.samples_used, out_dir / "icm.bin")
    write_matrix(cm.PCM, "PCM", cm.samples_used, out_dir / "pcm.bin")


def rank_stage(icm_path, pcm_path, out) -> dict:
    icm, _ = read_matrix(icm_path)
    pcm, _ = read_matrix(pcm_path)
    doc = rank_attention(icm, pcm).to_json()
    write_json(doc, out)
    return doc


def baselines_stage(network_path, out) -> None:
    write_json(baselines_json(all_baselines(load_network(network_path))), out)


def parse_top_x(text: str) -> tuple[int, ...]:
    """``"1..10"`` or ``"5,10,20"``."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"bad top-x spec {text!r}") from exc


def evaluate_stage(traces_path, ranks_path, baselines_path, network_path, out_dir, top_x=DEFAULT_TOP_X,
                   random_seed: int | None = None) -> None:
    net = load_network(network_path)
    att = read_json(ranks_path)
    base = read_json(baselines_path)
    ranks = {"attention": {"initiatives": att["initiatives"], "passives": att["passives"]}}
    for name in ("BC", "CFBC", "LODF"):
        # baselines give one ordering used for both roles
        ranks[name] = {"initiatives": base[name]["order"], "passives": base[name]["order"]}
    if random_seed is not None:
        perm = np.random.default_rng(random_seed).permutation(net.n_lines).tolist()
        ranks["random"] = {"initiatives": perm, "passives": perm}
    traces = read_traces(traces_path, net.name)
    meta = {"greedy_cutoff": att.get("greedy_cutoff"), "lodf_undefined_columns": base.get("lodf_undefined_columns", [])}
    emit_report(comparison_report(traces, net, ranks, top_x, meta=meta), out_dir)


# ---- orchestrated run -------------------------------------------------------

DEFAULT_RUN = {
    "network": {"synth": {"buses": 24, "topology": "grid", "capacity_margin": 2.5}, "seed": 1},
    "samples": 2000,
    "k_min": 2,
    "k_max": 8,
    "seed": 0,
    "g_max": DEFAULT_GMAX,
    "split": [0.6, 0.2, 0.2],
    "model": {"profile": "desk"},
    "extract_on": "train",
    "top_x": list(DEFAULT_TOP_X),
    "random_rank_seed": None,
}


@dataclass
class StageRecord:
    name: str
    key: str
    params: dict
    inputs: dict[str, str]
    outputs: dict[str, str]
    wall_time: float
    skipped: bool


@dataclass
class RunManifest:
    tool_version: str
    config: dict
    stages: list[StageRecord] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"tool_version": self.tool_version, "config": self.config, "stages": [asdict(s) for s in self.stages]}

    def stage(self, name: str) -> StageRecord:
        return next(s for s in self.stages if s.name == name)


def _stage_key(name: str, params: dict, inputs: dict[str, str]) -> str:
    doc = json.dumps({"stage": name, "params": params, "inputs": inputs, "version": __version__}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()


def load_run_config(doc: dict) -> dict:
    unknown = set(doc) - set(DEFAULT_RUN)
    if unknown:
        raise ValidationError(f"unknown run config keys {sorted(unknown)}")
    cfg = {**DEFAULT_RUN, **doc}
    net = cfg["network"]
    if not isinstance(net, dict) or ("path" in net) == ("synth" in net):
        raise ValidationError('run config "network" needs exactly one of "path" or "synth"')
    if cfg["extract_on"] not in ("train", "val", "test"):
        raise ValidationError(f'extract_on must be train, val or test (got {cfg["extract_on"]!r})')
    return cfg


def run_pipeline(config: dict, out_dir, workers: int = 1, force: bool = False, precision: str | None = None) -> RunManifest:
    """Run every stage in order, skipping stages whose inputs and outputs are unchanged."""
    cfg = load_run_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    old = {}
    mpath = out / "manifest.json"
    if mpath.exists() and not force:
        try:
            old = {s["name"]: s for s in read_json(mpath)["stages"]}
        except (GridCascadeError, KeyError, TypeError):
            old = {}
    manifest = RunManifest(__version__, cfg)

    def stage(name, params, inputs, outputs, fn):
        in_hashes = {str(p): file_hash(p) for p in inputs}
        key = _stage_key(name, params, {Path(p).name: h for p, h in in_hashes.items()})
        prev = old.get(name)
        if prev and prev["key"] == key and all(
            Path(p).exists() and file_hash(p) == h for p, h in prev["outputs"].items()
        ):
            log.info("stage %s: up to date", name)
            manifest.stages.append(StageRecord(name, key, params, in_hashes, prev["outputs"], 0.0, True))
            return
        t0 = time.perf_counter()
        try:
            fn()
        except GridCascadeError as exc:
            exc.args = (f"stage {name}: {exc}",)
            raise
        wall = time.perf_counter() - t0
        log.info("stage %s: %.1f s", name, wall)
        out_hashes = {str(p): file_hash(p) for p in outputs}
        manifest.stages.append(StageRecord(name, key, params, in_hashes, out_hashes, wall, False))

    net_cfg = cfg["network"]
    if "synth" in net_cfg:
        network = out / "network.json"
        p = {"spec": net_cfg["synth"], "seed": net_cfg.get("seed", 0)}
        stage("synth", p, [], [network], lambda: synth_stage(network, seed=p["seed"], **p["spec"]))
    else:
        network = Path(net_cfg["path"])
        if not network.exists():
            raise ParseError(f"stage network: {network}: no such file")
    n_lines = load_network(network).n_lines

    traces = out / "traces.jsonl"
    p = {k: cfg[k] for k in ("samples", "k_min", "k_max", "seed")}
    stage("generate", p, [network], [traces],
          lambda: generate_stage(network, traces, p["samples"], p["k_min"], p["k_max"], p["seed"], workers))

    data = out / "data"
    p = {"n_lines": n_lines, "g_max": cfg["g_max"], "split": cfg["split"], "seed": cfg["seed"]}
    split_files = [data / f"{k}.jsonl" for k in ("train", "val", "test")] + [data / "test_traces.jsonl", data / "manifest.json"]
    stage("transform", p, [traces], split_files,
          lambda: transform_stage(traces, data, n_lines, p["g_max"], tuple(p["split"]), p["seed"]))

    model = out / "model.ckpt"
    history = out / "history.json"
    mcfg = model_config(cfg["model"], data, seed=cfg["model"].get("seed", cfg["seed"]), precision=precision)
    p = mcfg.to_dict()
    stage("train", p, split_files[:2] + [data / "manifest.json"], [model, history],
          lambda: train_stage(data, mcfg, model, history))

    f1 = out / "f1.json"
    stage("eval", {}, [model, data / "test.jsonl"], [f1], lambda: eval_stage(model, data / "test.jsonl", f1))

    mats = out / "attention"
    source = data / f'{cfg["extract_on"]}.jsonl'
    stage("extract", {"on": cfg["extract_on"]}, [model, source], [mats / "icm.bin", mats / "pcm.bin"],
          lambda: extract_stage(model, source, mats, workers))

    ranks = out / "ranks.json"
    stage("rank", {}, [mats / "icm.bin", mats / "pcm.bin"], [ranks],
          lambda: rank_stage(mats / "icm.bin", mats / "pcm.bin", ranks))

    base = out / "baselines.json"
    stage("baselines", {}, [network], [base], lambda: baselines_stage(network, base))

    report = out / "report"
    p = {"top_x": list(cfg["top_x"]), "random_rank_seed": cfg["random_rank_seed"]}
    stage("evaluate", p, [data / "test_traces.jsonl", ranks, base, network], [report / "report.json", report / "report.csv"],
          lambda: evaluate_stage(data / "test_traces.jsonl", ranks, base, network, report, tuple(p["top_x"]),
                                 p["random_rank_seed"]))

    write_json(manifest.to_json(), mpath)
    return manifest
