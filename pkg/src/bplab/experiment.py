"""Batch driver: sweeps, prompt ablations, persistence, and plot tables.

Configs are flat ``key = value`` text files (one experiment per file; CLI
flags override file values).  Results are line-delimited JSON: a meta line
carrying the full config and its fingerprint, then one self-contained record
per (sweep point, repeat) cell.  Appends are crash-safe, and the file is
rewritten in canonical (point, repeat) order at finalization so worker
parallelism never changes the bytes.

Seeding: each cell's seed is derived from the master seed and the cell's
(point index, repeat) coordinates via ``numpy.random.SeedSequence`` spawn
keys, so any single cell can be re-run in isolation.  A repeat re-seeds both
the data subsampling and the parameter draws together.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import submartingale as smg
from .adainit import AdaInitConfig, ThresholdSpec, run_adainit
from .data import DatasetSpec, load_raw, prepare
from .generator import (
    ConformingMockGenerator,
    EndpointConfig,
    LlmGenerator,
    PromptContext,
    SurrogateGenerator,
)
from .initializers import parse_init_string, sample_params
from .qnn import CircuitSpec, TrainConfig, train_and_probe

DEFAULT_QUBIT_POINTS = tuple(range(2, 21, 2))
DEFAULT_LAYER_POINTS = tuple(range(4, 41, 4))

ABLATION_ARMS = {
    "both": (True, True),          # (data description, gradient feedback)
    "no_desc": (False, True),
    "no_feedback": (True, False),
    "neither": (False, False),
}

_DATA_DESCRIPTIONS = {
    "iris": "Flower measurements: sepal/petal lengths and widths in cm, "
            "two species, 4 features.",
    "wine": "Chemical analysis of wines: 13 continuous composition features, "
            "two cultivars.",
    "titanic": "Passenger manifest: class, sex, age, family counts, fare, "
               "embarkation port; label is survival.",
    "mnist": "Grayscale 28x28 handwritten digit images, classes 0 and 1, "
             "pixel intensities 0-255.",
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "iris"
    data_path: str = ""
    sweep: str = "qubits"              # qubits | layers
    points: tuple[int, ...] = ()       # empty -> axis default
    fixed: int = 2                     # frozen axis value
    repeats: int = 5
    method: str = "classic"            # classic | adainit
    init: str = "uniform[0,6.283185307179586]"
    generator: str = "surrogate"       # surrogate | mock | llm
    surrogate_sigma: float = 0.3
    iterations: int = 50
    k_param: int = 0                   # 0 -> iterations
    poly: str = "n6"
    learning_rate: float = 0.01
    batch_size: int = 20
    epochs: int = 30
    temperature: float = 1.0
    top_p: float = 1.0
    data_desc: str = ""
    seed: int = 1234
    output_dir: str = "results"
    endpoint_url: str = ""
    model: str = ""
    api_key_env: str = "BPLAB_API_KEY"

    def __post_init__(self):
        if self.sweep not in ("qubits", "layers"):
            raise ValueError(f"sweep must be 'qubits' or 'layers', got {self.sweep!r}")
        if self.method not in ("classic", "adainit"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.generator not in ("surrogate", "mock", "llm"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.points:
            default = (DEFAULT_QUBIT_POINTS if self.sweep == "qubits"
                       else DEFAULT_LAYER_POINTS)
            object.__setattr__(self, "points", default)
        else:
            object.__setattr__(self, "points", tuple(int(p) for p in self.points))

    @property
    def effective_k(self) -> int:
        return self.k_param if self.k_param > 0 else self.iterations

    def spec_for(self, point: int) -> CircuitSpec:
        if self.sweep == "qubits":
            return CircuitSpec(num_layers=self.fixed, num_qubits=point)
        return CircuitSpec(num_layers=point, num_qubits=self.fixed)

    def description(self) -> str:
        return self.data_desc or _DATA_DESCRIPTIONS.get(self.dataset, "")

    def to_canonical_text(self) -> str:
        items = asdict(self)
        lines = []
        for key in sorted(items):
            value = items[key]
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_canonical_text().encode()).hexdigest()[:16]

    def compat_key(self) -> str:
        """Hash of the sweep geometry; tables may only mix records sharing it."""
        text = f"{self.dataset}|{self.sweep}|{self.fixed}|{self.points}|{self.repeats}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_BOOLS = {"true": True, "false": False, "yes": True, "no": False}

_FIELD_TYPES = {
    "points": "int_tuple",
    "fixed": int, "repeats": int, "iterations": int, "k_param": int,
    "batch_size": int, "epochs": int, "seed": int,
    "surrogate_sigma": float, "learning_rate": float,
    "temperature": float, "top_p": float,
}


def parse_config_text(text: str) -> dict:
    """Parse the flat ``key = value`` format ('#' starts a comment)."""
    values: dict = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        kind = _FIELD_TYPES.get(key)
        if kind == "int_tuple":
            values[key] = tuple(int(v) for v in value.split(",") if v.strip())
        elif kind is int:
            values[key] = int(value)
        elif kind is float:
            values[key] = float(value)
        elif value.lower() in _BOOLS:
            values[key] = _BOOLS[value.lower()]
        else:
            values[key] = value
    return values


def load_config(path: Path, overrides: dict | None = None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8"))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**values)


def derive_cell_seed(master_seed: int, point_index: int, repeat: int) -> int:
    seq = np.random.SeedSequence(master_seed, spawn_key=(point_index, repeat))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------


def _make_generator(cfg: ExperimentConfig, seed: int, api_key: str = ""):
    if cfg.generator == "surrogate":
        return SurrogateGenerator(seed=seed, sigma=cfg.surrogate_sigma)
    if cfg.generator == "mock":
        return ConformingMockGenerator(seed=seed)
    endpoint = EndpointConfig(base_url=cfg.endpoint_url, model=cfg.model,
                              api_key=api_key)
    return LlmGenerator(endpoint)


def _prompt_context(cfg: ExperimentConfig, spec: CircuitSpec,
                    with_desc: bool = True) -> PromptContext:
    init_family = parse_init_string(cfg.init).family
    return PromptContext(
        nlayers=spec.num_layers, nqubits=spec.num_qubits, nclasses=2,
        init_family=init_family,
        data_desc=cfg.description() if with_desc else "",
        temperature=cfg.temperature, top_p=cfg.top_p,
    )


def run_cell(cfg: ExperimentConfig, raw, point: int, point_index: int,
             repeat: int, arm: str | None = None, api_key: str = "") -> dict:
    """Execute one (point, repeat) cell and return its result record."""
    cell_seed = derive_cell_seed(cfg.seed, point_index, repeat)
    spec = cfg.spec_for(point)
    prepared = prepare(raw, spec.num_qubits, seed=cell_seed)
    train_set = prepared.split("train")
    train_cfg = TrainConfig(learning_rate=cfg.learning_rate,
                            batch_size=cfg.batch_size, epochs=cfg.epochs,
                            seed=cell_seed)
    started = time.perf_counter()
    record = {
        "fingerprint": cfg.fingerprint(),
        "compat": cfg.compat_key(),
        "dataset": cfg.dataset,
        "method": cfg.method,
        "sweep": cfg.sweep,
        "point": point,
        "repeat": repeat,
        "seed": cell_seed,
        "epochs": cfg.epochs,
        "reducer": prepared.reducer_provenance,
    }
    if arm is not None:
        record["arm"] = arm

    if cfg.method == "classic" and arm is None:
        init = parse_init_string(cfg.init)
        params = sample_params(spec, init, classes=2,
                               rng=np.random.default_rng(cell_seed))
        report = train_and_probe(spec, params, train_set, train_cfg)
        record["variance"] = report.variance
        record["iterations_used"] = None
        result_history = None
    else:
        with_desc, with_feedback = ABLATION_ARMS[arm] if arm else (True, True)
        generator = _make_generator(cfg, seed=cell_seed, api_key=api_key)
        ada_cfg = AdaInitConfig(
            iterations=cfg.iterations,
            train=train_cfg,
            threshold=ThresholdSpec(k=cfg.effective_k, poly=cfg.poly),
            prompt=_prompt_context(cfg, spec, with_desc=with_desc),
            feedback_enabled=with_feedback,
        )
        result = run_adainit(spec, train_set, generator, ada_cfg)
        record["variance"] = result.final_s
        record["iterations_used"] = result.iterations_to_best
        record["aborted_at"] = result.aborted_at
        result_history = result

    record["wall_time"] = time.perf_counter() - started
    if result_history is not None:
        record["_history"] = [rec.to_dict() for rec in result_history.history]
        best = result_history.best_params
        if best is not None:
            record["_best_params"] = {
                "l0": best.theta0.tolist(),
                "l1": best.head_weights.tolist(),
                "l2": best.head_bias.tolist(),
            }
    return record


def _cell_task(payload: dict) -> dict:
    """Picklable worker entry: rebuild the config, reload data, run the cell."""
    cfg = ExperimentConfig(**payload["config"])
    raw = load_raw(DatasetSpec(cfg.dataset, Path(cfg.data_path)))
    return run_cell(cfg, raw, payload["point"], payload["point_index"],
                    payload["repeat"], payload.get("arm"),
                    payload.get("api_key", ""))


def _write_records(path: Path, meta: dict, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _pop_side_outputs(record: dict, out_dir: Path) -> dict:
    """Persist per-cell history/candidates; strip them from the record."""
    history = record.pop("_history", None)
    best = record.pop("_best_params", None)
    tag = f"p{record['point']}_r{record['repeat']}"
    if record.get("arm"):
        tag = f"{record['arm']}_{tag}"
    if history is not None:
        hist_path = out_dir / f"history_{tag}.jsonl"
        with open(hist_path, "w", encoding="utf-8") as fh:
            for entry in history:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        record["history_file"] = hist_path.name
    if best is not None:
        cand_path = out_dir / f"candidate_{tag}.npz"
        np.savez(cand_path, l0=np.asarray(best["l0"]),
                 l1=np.asarray(best["l1"]), l2=np.asarray(best["l2"]))
        record["candidate_file"] = cand_path.name
    return record


def _run_cells(cfg: ExperimentConfig, cells: list[dict], out_path: Path,
               workers: int, api_key: str) -> list[dict]:
    out_dir = out_path.parent
    meta = {"config": asdict(cfg), "fingerprint": cfg.fingerprint(),
            "compat": cfg.compat_key()}
    records: list[dict] = []
    # Crash-safe append stream while running; canonical rewrite afterwards.
    with open(out_path, "w", encoding="utf-8") as live:
        live.write(json.dumps(meta, sort_keys=True) + "\n")
        live.flush()

        def finish(record: dict) -> None:
            record = _pop_side_outputs(record, out_dir)
            records.append(record)
            live.write(json.dumps(record, sort_keys=True) + "\n")
            live.flush()

        if workers <= 1:
            raw = load_raw(DatasetSpec(cfg.dataset, Path(cfg.data_path)))
            for cell in cells:
                finish(run_cell(cfg, raw, cell["point"], cell["point_index"],
                                cell["repeat"], cell.get("arm"), api_key))
        else:
            payloads = [dict(cell, config=asdict(cfg), api_key=api_key)
                        for cell in cells]
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                for record in pool.map(_cell_task, payloads):
                    finish(record)

    order = {(cell["point_index"], cell["repeat"], cell.get("arm") or ""): i
             for i, cell in enumerate(cells)}
    records.sort(key=lambda r: order[(cfg.points.index(r["point"]),
                                      r["repeat"], r.get("arm") or "")])
    _write_records(out_path, meta, records)
    return records


def run_sweep(cfg: ExperimentConfig, workers: int = 1, api_key: str = "") -> Path:
    """Run every (point, repeat) cell; returns the results file path."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [{"point": point, "point_index": i, "repeat": r}
             for i, point in enumerate(cfg.points)
             for r in range(cfg.repeats)]
    out_path = out_dir / "results.jsonl"
    _run_cells(cfg, cells, out_path, workers, api_key)
    return out_path


def ablate_prompts(cfg: ExperimentConfig, workers: int = 1,
                   api_key: str = "") -> Path:
    """Run the four prompt arms over the sweep with paired cell seeds."""
    if cfg.method != "adainit":
        raise ValueError("prompt ablation requires the adainit method")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [{"point": point, "point_index": i, "repeat": r, "arm": arm}
             for arm in ABLATION_ARMS
             for i, point in enumerate(cfg.points)
             for r in range(cfg.repeats)]
    out_path = out_dir / "ablation.jsonl"
    _run_cells(cfg, cells, out_path, workers, api_key)
    return out_path


# ---------------------------------------------------------------------------
# Plot-data emission
# ---------------------------------------------------------------------------


def _read_result_file(path: Path) -> tuple[dict, list[dict]]:
    meta = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "config" in obj:
                meta = obj
            else:
                records.append(obj)
    if meta is None:
        raise ValueError(f"{path} has no config meta line")
    return meta, records


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def emit_plot_data(result_files, out_dir: Path) -> list[Path]:
    """Aggregate result files into delimited tables, one per figure family.

    Emits mean/std variance curves per method (or ablation arm), a cost
    staircase per search history, and a runtime table.  Files from
    incompatible sweeps (different dataset, axis, points, or repeats) are
    rejected.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loaded = [(_read_result_file(Path(p)), Path(p)) for p in result_files]
    if not loaded:
        raise ValueError("no result files given")
    compat_keys = {meta["compat"] for (meta, _), _ in loaded}
    if len(compat_keys) > 1:
        raise ValueError(f"incompatible sweeps cannot share a table: {compat_keys}")

    written: list[Path] = []
    sweep_axis = loaded[0][0][0]["config"]["sweep"]

    def aggregate(records: list[dict], group_field: str) -> list[list]:
        groups: dict[tuple, list[float]] = {}
        for rec in records:
            if rec.get("variance") is None:
                continue
            groups.setdefault((rec[group_field], rec["point"]), []).append(
                rec["variance"])
        rows = []
        for (label, point), values in sorted(groups.items()):
            arr = np.asarray(values)
            rows.append([label, point, f"{arr.mean():.10e}",
                         f"{arr.std():.10e}", len(values)])
        return rows

    plain = [rec for (_, records), _ in loaded for rec in records
             if "arm" not in rec]
    if plain:
        table = out_dir / f"variance_vs_{sweep_axis}.csv"
        _write_table(table, ["method", "point", "mean_variance",
                             "std_variance", "repeats"],
                     aggregate(plain, "method"))
        written.append(table)

        runtime_rows = []
        by_point: dict[int, list[float]] = {}
        for rec in plain:
            by_point.setdefault(rec["point"], []).append(
                rec["wall_time"] / max(1, rec["epochs"]))
        for point, values in sorted(by_point.items()):
            runtime_rows.append([point, f"{np.mean(values):.6f}"])
        runtime = out_dir / "runtime_per_epoch.csv"
        _write_table(runtime, ["point", "mean_epoch_seconds"], runtime_rows)
        written.append(runtime)

    ablation = [rec for (_, records), _ in loaded for rec in records
                if "arm" in rec]
    if ablation:
        table = out_dir / "prompt_ablation.csv"
        _write_table(table, ["arm", "point", "mean_variance",
                             "std_variance", "repeats"],
                     aggregate(ablation, "arm"))
        written.append(table)

    for (meta, records), path in loaded:
        for rec in records:
            hist_name = rec.get("history_file")
            if not hist_name:
                continue
            hist_path = path.parent / hist_name
            if not hist_path.exists():
                continue
            entries = [json.loads(line) for line in
                       hist_path.read_text(encoding="utf-8").splitlines() if line]
            if not entries:
                continue
            total = len(entries)
            final_s = entries[-1]["S"]
            rows = [[f"{(i + 1) / total:.6f}",
                     f"{(e['S'] / final_s if final_s > 0 else 0.0):.6f}"]
                    for i, e in enumerate(entries)]
            table = out_dir / f"tradeoff_{hist_path.stem}.csv"
            _write_table(table, ["fraction_iterations", "fraction_best_variance"],
                         rows)
            written.append(table)
    return written


# ---------------------------------------------------------------------------
# Synthetic-process validation battery
# ---------------------------------------------------------------------------


def run_submartingale_lab(out_path: Path, seed: int = 0, trials: int = 1000,
                          drift_samples: int = 100_000) -> Path:
    """Drift checks, the hitting-time grid, and the two corollary cases."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    reports: list[dict] = []

    alpha = 0.1
    laws = [
        smg.IncrementProcess.point_mass(alpha, alpha, seed=seed),
        smg.IncrementProcess.uniform(alpha, 0.0, 2 * alpha, seed=seed + 1),
        smg.IncrementProcess.bernoulli_mixture(alpha, 0.3, accept=10 * alpha,
                                               seed=seed + 2),
        smg.IncrementProcess.exponential(alpha, alpha, seed=seed + 3),
        smg.IncrementProcess.uniform(alpha, alpha, 2 * alpha, seed=seed + 4),
    ]
    for process in laws:
        check = smg.drift_lower_bound_check(process, drift_samples)
        reports.append({"kind": "drift", "law": process.label,
                        "alpha": process.alpha, "p": process.p,
                        "passed": check.passed,
                        "empirical_mean": check.empirical_mean,
                        "lower_bound": check.lower_bound,
                        "margin": check.margin})

    for a in (1e-3, 1e-2, 1e-1):
        for p in (0.1, 0.5, 1.0):
            for b_mult in (10, 100):
                process = smg.IncrementProcess.bernoulli_mixture(
                    a, p, accept=(a, 2 * a), reject=(0.0, a * 0.999),
                    seed=seed + 17)
                report = smg.hitting_time(process, b=b_mult * a, trials=trials)
                entry = report.to_dict()
                entry.update({"kind": "hitting", "alpha": a, "p": p,
                              "law": process.label})
                reports.append(entry)

    one, sup = smg.corollary_cases(CircuitSpec(2, 2), k=50, p=0.5,
                                   trials=max(trials, 100), seed=seed + 99)
    for rep in (one, sup):
        entry = rep.to_dict()
        entry["kind"] = "corollary"
        reports.append(entry)

    with open(out_path, "w", encoding="utf-8") as fh:
        for entry in reports:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return out_path
