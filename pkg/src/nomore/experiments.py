"""Experiment drivers behind the CLI commands.

Every driver is a pure function of its ExperimentConfig: all randomness
flows from ``cfg.seed`` (or the paired ``cfg.seeds``) through named Rng
substreams. Wall-clock measurements are collected only when ``cfg.bench``
is set and are written to their own file, so every other output is
byte-reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import ExperimentConfig
from .data import Dataset, Split, gen_mixture_dataset, load_cifar10_binary
from .nomorelization import Model, ResidualBlock, Wrapper, build_mlp, build_resnet
from .noise_model import (
    AllFromClass,
    BatchComposition,
    FixedComposition,
    Free,
    MixtureSpec,
    closed_form_noise,
    decompose_noise,
    disjoint_differences,
    extract_intra_noise,
    free_noise_moments,
    noise_rows,
    simulate_bn_sample,
)
from .report import Report, line_plot
from .stats import hotelling_one_sample
from .tensor import SGD, Rng, Tensor
from .variance_lab import CSV_HEADER as VARIANCE_HEADER
from .variance_lab import DepthProbeConfig, ProbeWrapper, probe_variance

WARMUP_STEPS = 10


# ------------------------------------------------------------------- datasets


def synthetic_spec(cfg: ExperimentConfig) -> MixtureSpec:
    """The overfit-prone mixture used by train-compare and sensitivity.

    Class ``y`` has its mean on axis ``y`` (pairwise distance
    ``separation * input_scale``); the remaining axes carry pure noise.
    """
    n, d = cfg.num_classes, cfg.dim
    if n > d:
        raise ValueError("num_classes must not exceed dim")
    means = np.zeros((n, d))
    means[np.arange(n), np.arange(n)] = cfg.separation / math.sqrt(2.0)
    stds = np.ones((n, d))
    return MixtureSpec(means * cfg.input_scale, stds * cfg.input_scale, np.full(n, 1.0 / n))


def _cifar(path: str, cfg: ExperimentConfig, rng: Rng) -> Dataset:
    from pathlib import Path

    p = Path(path)
    if p.is_dir() and (p / "test_batch.bin").exists():
        return Dataset(load_cifar10_binary(p, cfg.cifar_subset, rng, "train"),
                       load_cifar10_binary(p, cfg.cifar_subset, rng, "test"))
    # a single batch file: draw twice the subset and split each class in half
    both = load_cifar10_binary(p, 2 * cfg.cifar_subset, rng, "train")
    first = np.zeros(len(both), dtype=bool)
    for c in range(10):
        idx = np.flatnonzero(both.y == c)
        first[idx[: len(idx) // 2]] = True
    return Dataset(Split(both.x[first], both.y[first], 10), Split(both.x[~first], both.y[~first], 10))


def make_dataset(cfg: ExperimentConfig, seed: int) -> Dataset:
    rng = Rng(seed, ("data",))
    if cfg.dataset == "synth":
        return gen_mixture_dataset(synthetic_spec(cfg), cfg.n_train, cfg.n_test, rng)
    return _cifar(cfg.dataset.split(":", 1)[1], cfg, rng)


def make_model(cfg: ExperimentConfig, data: Dataset, wrapper, gamma: float, seed: int) -> Model:
    rng = Rng(seed, ("model",))
    if len(data.input_shape) == 1:
        return build_mlp(data.input_shape[0], cfg.width, cfg.depth, data.num_classes,
                         wrapper, gamma, rng)
    return build_resnet(cfg.stages, cfg.base_channels, wrapper, gamma, rng,
                        num_classes=data.num_classes, in_channels=data.input_shape[0])


# ------------------------------------------------------------------- training


@dataclass
class RunMetrics:
    wrapper: str
    seed: int
    gamma_noise: float
    eval_steps: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    test_accuracy: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: int | None = None
    step_ms: float | None = None  # median, warm-up excluded; bench only

    @property
    def final_accuracy(self) -> float:
        return self.test_accuracy[-1] if self.test_accuracy and not self.diverged else math.nan


def evaluate(model: Model, split: Split, chunk: int = 1000) -> float:
    model.eval()
    correct = 0
    with T.no_grad():
        for i in range(0, len(split), chunk):
            logits = model(Tensor(split.x[i:i + chunk])).data
            correct += int(np.sum(np.argmax(logits, axis=1) == split.y[i:i + chunk]))
    return correct / len(split)


def train(cfg: ExperimentConfig, data: Dataset, wrapper, gamma: float, seed: int, *,
          model: Model | None = None, frozen=(), timed: bool = False) -> tuple[Model, RunMetrics]:
    """SGD on ``data`` for ``cfg.steps`` minibatches of ``cfg.batch_size``.

    The minibatch order depends on ``seed`` only, so every wrapper sees the
    same sequence. ``frozen`` lists parameter roles (e.g. ``"alpha"``,
    ``"beta"``) to keep at their initial value.
    """
    model = model or make_model(cfg, data, wrapper, gamma, seed)
    named = model.named_tensors()
    params = [t for _, t, r in named if t.requires_grad and r not in frozen]
    no_decay = [t for _, t, r in named if r in ("alpha", "beta")]
    opt = SGD(params, cfg.sgd(), no_decay=no_decay)
    metrics = RunMetrics(Wrapper(wrapper).value, seed, float(gamma))
    n, b = len(data.train), cfg.batch_size
    if n < b:
        raise ValueError(f"training split has {n} samples, fewer than batch_size={b}")
    order = Rng(seed, ("order",)).generator
    perm, pos = order.permutation(n), 0
    losses, times = [], []
    for step in range(1, cfg.steps + 1):
        if pos + b > n:
            perm, pos = order.permutation(n), 0
        idx = perm[pos:pos + b]
        pos += b
        t0 = time.perf_counter() if timed else 0.0
        model.train()
        for p in model.parameters():
            p.grad = None
        loss = T.cross_entropy(model(Tensor(data.train.x[idx])), data.train.y[idx],
                               cfg.label_smoothing)
        value = loss.item()
        if not math.isfinite(value):
            metrics.diverged, metrics.diverged_at = True, step
            break
        loss.backward()
        opt.step()
        if timed:
            times.append(time.perf_counter() - t0)
        losses.append(value)
        if step % cfg.eval_every == 0 or step == cfg.steps:
            metrics.eval_steps.append(step)
            metrics.train_loss.append(float(np.mean(losses)))
            metrics.test_accuracy.append(evaluate(model, data.test))
            losses = []
    if cfg.steps == 0:
        metrics.eval_steps.append(0)
        metrics.train_loss.append(math.nan)
        metrics.test_accuracy.append(evaluate(model, data.test))
    if timed and len(times) > WARMUP_STEPS:
        metrics.step_ms = float(np.median(times[WARMUP_STEPS:]) * 1e3)
    return model, metrics


def _bench_block(cfg: ExperimentConfig, data: Dataset, wrapper, gamma: float):
    rng = Rng(cfg.seed, ("bench",))
    if len(data.input_shape) == 1:
        block = ResidualBlock("mlp", cfg.width, wrapper, rng, gamma_noise=gamma)
        shape = (cfg.batch_size, cfg.width)
    else:
        block = ResidualBlock("conv", cfg.base_channels, wrapper, rng, gamma_noise=gamma)
        shape = (cfg.batch_size, cfg.base_channels) + tuple(data.input_shape[1:])
    return block, Tensor(rng.normal(shape), requires_grad=True)


def time_blocks(cfg: ExperimentConfig, data: Dataset, gammas: dict, reps: int = 200) -> dict:
    """Median forward+backward time (ms) of one Train-mode block per wrapper.

    ``gammas`` maps wrapper -> noise amplitude. Wrappers are timed in
    alternation within each repetition so load drift hits all of them alike.
    """
    cases = {w: _bench_block(cfg, data, w, g) for w, g in gammas.items()}
    times = {w: [] for w in cases}
    for _ in range(WARMUP_STEPS + reps):
        for w, (block, x) in cases.items():
            t0 = time.perf_counter()
            T.sum(block(x)).backward()
            times[w].append(time.perf_counter() - t0)
    return {w: float(np.median(t[WARMUP_STEPS:]) * 1e3) for w, t in times.items()}


def time_block(cfg: ExperimentConfig, data: Dataset, wrapper, gamma: float,
               reps: int = 200) -> float:
    return time_blocks(cfg, data, {wrapper: gamma}, reps)[wrapper]


def _gamma_for(cfg: ExperimentConfig, wrapper) -> float:
    return cfg.gamma_noise if Wrapper(wrapper) is Wrapper.NOMORE else 0.0


@dataclass
class CompareResult:
    runs: list  # RunMetrics, seeds x wrappers
    summary: dict  # wrapper -> dict of aggregate numbers
    block_ms: dict = field(default_factory=dict)


def _aggregate(runs) -> dict:
    ok = [r.final_accuracy for r in runs if not r.diverged]
    return {
        "mean": float(np.mean(ok)) if ok else math.nan,
        "std": float(np.std(ok, ddof=1)) if len(ok) > 1 else 0.0 if ok else math.nan,
        "n": len(ok),
        "diverged": sum(r.diverged for r in runs),
    }


def run_train_compare(cfg: ExperimentConfig) -> CompareResult:
    runs, by_wrapper = [], {w: [] for w in cfg.wrappers}
    for seed in cfg.seeds:
        data = make_dataset(cfg, seed)
        for w in cfg.wrappers:
            _, m = train(cfg, data, w, _gamma_for(cfg, w), seed, timed=cfg.bench)
            runs.append(m)
            by_wrapper[w].append(m)
    summary = {w: _aggregate(rs) for w, rs in by_wrapper.items()}
    block_ms = {}
    if cfg.bench:
        data = make_dataset(cfg, cfg.seeds[0])
        block_ms = time_blocks(cfg, data, {w: _gamma_for(cfg, w) for w in cfg.wrappers})
        for w in cfg.wrappers:
            steps = [r.step_ms for r in by_wrapper[w] if r.step_ms is not None]
            summary[w]["step_ms"] = float(np.median(steps)) if steps else math.nan
            summary[w]["block_ms"] = block_ms[w]
        if "bn" in block_ms:
            for w in cfg.wrappers:
                summary[w]["speedup_ratio"] = block_ms["bn"] / block_ms[w]
                summary[w]["step_speedup_ratio"] = summary["bn"]["step_ms"] / summary[w]["step_ms"]
    return CompareResult(runs, summary, block_ms)


@dataclass
class SensitivityResult:
    gammas: tuple
    runs: list
    mean: np.ndarray
    std: np.ndarray
    n_ok: np.ndarray

    def peak(self) -> tuple[float, float]:
        i = int(np.nanargmax(self.mean))
        return self.gammas[i], float(self.mean[i])


def run_sensitivity(cfg: ExperimentConfig, gammas=None) -> SensitivityResult:
    gammas = tuple(cfg.gammas if gammas is None else gammas)
    if len(gammas) < 2:
        raise ValueError("sensitivity needs at least 2 gamma values")
    runs = []
    per_gamma = {g: [] for g in gammas}
    for seed in cfg.seeds:
        data = make_dataset(cfg, seed)
        for g in gammas:
            _, m = train(cfg, data, "nomore", g, seed)
            runs.append(m)
            per_gamma[g].append(m)
    agg = [_aggregate(per_gamma[g]) for g in gammas]
    return SensitivityResult(gammas, runs, np.array([a["mean"] for a in agg]),
                             np.array([a["std"] for a in agg]), np.array([a["n"] for a in agg]))


# ------------------------------------------------------------------ noise law


@dataclass
class AssertionReport:
    a1_pass_rate: float
    a1_variance_ratio: float
    a1_pvalues: list
    classes: int
    a2_pvalues: np.ndarray  # runs x fixed class x companion class
    a2_self_pass_rate: float
    a2_cross_reject_rate: float
    a3: object = None


def _a1(cfg: ExperimentConfig) -> tuple[list, float]:
    b, d = cfg.noise_batch, cfg.noise_dim
    spec = MixtureSpec.separated(2, d, cfg.assertion_separation)
    comp = (b // 2 + b % 2, b // 2)
    pvals, ratios = [], []
    expected = (2 * b - 2) / b ** 2  # sigma = 1
    for r in range(cfg.runs):
        nb = simulate_bn_sample(None, spec, b, FixedComposition(comp),
                                Rng(cfg.seed, ("assertion1", r)), cfg.reps)
        pvals.append(hotelling_one_sample(disjoint_differences(nb)).p_value)
        ratios.append(float(np.var(extract_intra_noise(nb), axis=0, ddof=0).mean()) / expected)
    return pvals, float(np.mean(ratios))


def _a2(cfg: ExperimentConfig, spec: MixtureSpec) -> np.ndarray:
    n = spec.n
    out = np.zeros((cfg.runs, n, n))
    for r in range(cfg.runs):
        for y in range(n):
            for yc in range(n):
                nb = simulate_bn_sample(None, spec, cfg.noise_batch, AllFromClass(yc),
                                        Rng(cfg.seed, ("assertion2", r, y, yc)), cfg.reps,
                                        fixed_class=y)
                out[r, y, yc] = hotelling_one_sample(nb.xhat).p_value
    return out


def run_assertions(cfg: ExperimentConfig) -> AssertionReport:
    pvals, ratio = _a1(cfg)
    spec = MixtureSpec.separated(cfg.num_classes, cfg.noise_dim, cfg.assertion_separation)
    p2 = _a2(cfg, spec)
    n = spec.n
    self_mask = np.eye(n, dtype=bool)
    self_rate = float(np.mean(p2[:, self_mask] > 0.05))
    cross = p2[:, ~self_mask]
    cross_rate = float(np.mean(cross < 0.05)) if cross.size else math.nan
    a3 = None
    if n >= 2:
        spec3 = MixtureSpec.separated(n, cfg.noise_dim, cfg.decomposition_separation)
        per_class = {y: simulate_bn_sample(None, spec3, cfg.noise_batch, AllFromClass(y),
                                           Rng(cfg.seed, ("assertion3", y)), cfg.reps)
                     for y in range(n)}
        a3 = decompose_noise(per_class)
    return AssertionReport(float(np.mean(np.array(pvals) > 0.05)), ratio, pvals, n, p2,
                           self_rate, cross_rate, a3)


@dataclass
class NoiseSimRow:
    case: str
    dim: int
    closed_mean: float
    empirical_mean: float
    closed_var: float
    empirical_var: float
    z_mean: float
    z_var: float


def _moment_rows(case, delta, mean, var) -> list:
    k = len(delta)
    emp_m, emp_v = delta.mean(axis=0), delta.var(axis=0, ddof=1)
    rows = []
    for j in range(delta.shape[1]):
        se_m = math.sqrt(var[j] / k)
        m4 = float(np.mean((delta[:, j] - emp_m[j]) ** 4))
        se_v = math.sqrt(max(m4 - emp_v[j] ** 2, 1e-300) / k)
        rows.append(NoiseSimRow(case, j, float(mean[j]), float(emp_m[j]), float(var[j]),
                                float(emp_v[j]), float((emp_m[j] - mean[j]) / se_m),
                                float((emp_v[j] - var[j]) / se_v)))
    return rows


def run_noise_sim(cfg: ExperimentConfig):
    """Closed-form vs. empirical moments of delta for each constraint."""
    b = cfg.noise_batch
    spec = MixtureSpec.separated(max(cfg.num_classes, 1), cfg.noise_dim, cfg.assertion_separation)
    rows = []
    free = simulate_bn_sample(None, spec, b, Free(), Rng(cfg.seed, ("noise", "free")), cfg.noise_reps)
    rows += _moment_rows("free", free.delta, *free_noise_moments(spec, b))
    counts = [b // spec.n] * spec.n
    counts[0] += b - sum(counts)
    comp = BatchComposition(tuple(counts), b)
    fixed = simulate_bn_sample(None, spec, b, FixedComposition(comp.counts),
                               Rng(cfg.seed, ("noise", "fixed")), cfg.noise_reps)
    rows += _moment_rows("fixed", fixed.delta, *closed_form_noise(spec, comp, 0))
    last = spec.n - 1
    same = simulate_bn_sample(None, spec, b, AllFromClass(last), Rng(cfg.seed, ("noise", "class")),
                              cfg.noise_reps)
    comp_c = BatchComposition(tuple(same.counts[0]), b)
    rows += _moment_rows(f"all_from_{last}", same.delta, *closed_form_noise(spec, comp_c, 0))
    full = simulate_bn_sample(None, spec, b, Free(), Rng(cfg.seed, ("noise", "free")),
                              cfg.noise_reps, mode="full")
    gap = float(np.max(np.abs(full.xhat.mean(axis=0) - free.xhat.mean(axis=0))))
    return rows, free, gap


# ------------------------------------------------------------------- variance


def run_variance(cfg: ExperimentConfig) -> list:
    return [probe_variance(DepthProbeConfig(cfg.probe_depth, cfg.probe_width, cfg.probe_batch,
                                            cfg.probe_trials, w, cfg.seed))
            for w in ProbeWrapper]


# -------------------------------------------------------------------- reports


def _g(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"


def report_train_compare(cfg: ExperimentConfig, res: CompareResult, rep: Report) -> None:
    rows = []
    for m in res.runs:
        for s, loss, acc in zip(m.eval_steps, m.train_loss, m.test_accuracy):
            rows.append([m.wrapper, m.seed, m.gamma_noise, s, loss, acc, int(m.diverged)])
        if not m.eval_steps:
            rows.append([m.wrapper, m.seed, m.gamma_noise, m.diverged_at, math.nan, math.nan, 1])
    rep.csv("runs", ["wrapper", "seed", "gamma_noise", "step", "train_loss", "test_accuracy",
                     "diverged"], rows)
    srows = [[w, s["mean"], s["std"], s["n"], s["diverged"]] for w, s in res.summary.items()]
    rep.csv("summary", ["wrapper", "accuracy_mean", "accuracy_std", "runs_ok", "runs_diverged"], srows)
    lines = [f"train-compare  seeds={','.join(map(str, cfg.seeds))}  steps={cfg.steps}  "
             f"batch={cfg.batch_size}  dataset={cfg.dataset}", ""]
    lines.append(f"{'wrapper':<10} {'accuracy':>18} {'ok':>4} {'diverged':>9}")
    for w, s in res.summary.items():
        lines.append(f"{w:<10} {_g(s['mean']):>9} +- {_g(s['std']):<6} {s['n']:>4} {s['diverged']:>9}")
    for m in res.runs:
        if m.diverged:
            lines.append(f"DIVERGED: wrapper={m.wrapper} seed={m.seed} at step {m.diverged_at} "
                         "(excluded from the mean)")
    rep.text("summary", "\n".join(lines))
    if cfg.bench:
        brows = [[w, s.get("block_ms"), s.get("step_ms"), s.get("speedup_ratio"),
                  s.get("step_speedup_ratio")] for w, s in res.summary.items()]
        rep.csv("timing", ["wrapper", "block_ms", "step_ms", "speedup_ratio",
                           "step_speedup_ratio"], brows)


def report_sensitivity(cfg: ExperimentConfig, res: SensitivityResult, rep: Report) -> None:
    rows = [[m.gamma_noise, m.seed, m.final_accuracy, int(m.diverged)] for m in res.runs]
    rep.csv("runs", ["gamma_noise", "seed", "test_accuracy", "diverged"], rows)
    rep.csv("curve", ["gamma_noise", "accuracy_mean", "accuracy_std", "runs_ok"],
            [[g, float(m), float(s), int(n)] for g, m, s, n in zip(res.gammas, res.mean, res.std, res.n_ok)])
    pos = list(range(len(res.gammas)))
    labels = [(i, "0" if g == 0 else f"{g:g}") for i, g in zip(pos, res.gammas)]
    svg = line_plot({"NoMore": (pos, [float(v) for v in res.mean])},
                    "Test accuracy vs. noise amplitude", "gamma_noise", "accuracy",
                    xticklabels=labels)
    rep.svg("curve", svg)
    g, acc = res.peak()
    lines = [f"sensitivity  seeds={','.join(map(str, cfg.seeds))}  steps={cfg.steps}", ""]
    lines += [f"gamma={gg:<8g} accuracy={_g(float(m))} +- {_g(float(s))}  runs={int(n)}"
              for gg, m, s, n in zip(res.gammas, res.mean, res.std, res.n_ok)]
    lines += ["", f"peak at gamma={g:g} (accuracy {acc:.4f})"]
    rep.text("summary", "\n".join(lines))


CLASS_NAMES = "abcdefghijklmnopqrstuvwxyz"


def report_assertions(cfg: ExperimentConfig, res: AssertionReport, rep: Report) -> None:
    rows = [["1", r, "", "", p] for r, p in enumerate(res.a1_pvalues)]
    n = res.classes
    for r in range(res.a2_pvalues.shape[0]):
        for y in range(n):
            for yc in range(n):
                rows.append(["2", r, y, yc, float(res.a2_pvalues[r, y, yc])])
    rep.csv("pvalues", ["assertion", "run", "fixed_class", "companion_class", "p_value"], rows)
    med = np.median(res.a2_pvalues, axis=0)
    lines = [f"assertions  runs={cfg.runs}  B={cfg.noise_batch}  K={cfg.reps}  d={cfg.noise_dim}", ""]
    lines += ["Assertion 1: intra-distribution noise is zero-centred for a fixed composition",
              f"  Hotelling p > 0.05 in {res.a1_pass_rate:.1%} of runs",
              f"  variance / ((2B-2)/B^2 sigma^2) = {res.a1_variance_ratio:.4f}", ""]
    lines.append("Assertion 2: median p-value, rows = fixed sample class, columns = companion class")
    lines.append("  " + " ".join(f"{CLASS_NAMES[c]:>10}" for c in range(n)))
    for y in range(n):
        cells = []
        for yc in range(n):
            tag = "(self)" if y == yc else ""
            cells.append(f"{med[y, yc]:.3f}{tag}".rjust(10))
        lines.append(f"{CLASS_NAMES[y]} " + " ".join(cells))
    lines.append(f"  self-class p > 0.05: {res.a2_self_pass_rate:.1%}")
    if n < 2:
        lines.append("  no cross-class pairs")
    else:
        lines.append(f"  cross-class p < 0.05: {res.a2_cross_reject_rate:.1%}")
    lines.append("")
    if res.a3 is None:
        lines.append("Assertion 3: skipped (needs at least 2 classes)")
    else:
        a3 = res.a3
        lines += ["Assertion 3: noise is dominated by the inter-distribution term",
                  f"  PCA between/within scatter = {a3.ratio:.2f}",
                  f"  nearest-centroid batch-class accuracy = {a3.accuracy:.4f}"]
        if a3.degenerate:
            lines.append("  covariance degenerate: pseudo-spectrum used")
    rep.text("summary", "\n".join(lines))


def report_noise_sim(cfg: ExperimentConfig, result, rep: Report) -> None:
    rows, free, gap = result
    d = free.delta.shape[1]
    rep.csv("deltas", ["rep", "class", "composition"] + [f"delta_{j}" for j in range(d)],
            _limited_rows(free, cfg.reps))  # first reps rows; the moments use all K
    rep.csv("moments", ["case", "dim", "closed_mean", "empirical_mean", "closed_var",
                        "empirical_var", "z_mean", "z_var"],
            [[r.case, r.dim, r.closed_mean, r.empirical_mean, r.closed_var, r.empirical_var,
              r.z_mean, r.z_var] for r in rows])
    lines = [f"noise-sim  B={cfg.noise_batch}  K={len(free)}  d={d}", ""]
    for case in dict.fromkeys(r.case for r in rows):
        rs = [r for r in rows if r.case == case]
        zm = max(abs(r.z_mean) for r in rs)
        zv = max(abs(r.z_var) for r in rs)
        lines.append(f"{case:<14} max |z| mean={zm:.2f} variance={zv:.2f}")
    lines.append("")
    lines.append(f"full BN vs mean-only: max |mean(xhat) difference| = {gap:.4g}")
    rep.text("summary", "\n".join(lines))


def _limited_rows(batch, k):
    for i, row in enumerate(noise_rows(batch)):
        if i >= k:
            break
        yield row


def report_variance(cfg: ExperimentConfig, profiles, rep: Report) -> None:
    rows = [r for p in profiles for r in p.rows()]
    rep.csv("profile", VARIANCE_HEADER, rows)
    series = {p.config.wrapper.value: (list(range(len(p.variances))), list(p.variances))
              for p in profiles}
    rep.svg("profile", line_plot(series, "Activation variance vs. block", "l", "Var(x^l)",
                                 logy=True))
    lines = [f"variance  depth={cfg.probe_depth}  width={cfg.probe_width}  "
             f"batch={cfg.probe_batch}  trials={cfg.probe_trials}", ""]
    for p in profiles:
        f = p.fit
        fit = "fit=n/a (depth < 2)" if f is None else (
            f"fit={f.label:<12} base={f.base:.4f} slope={f.slope:.4f}")
        lines.append(f"{p.config.wrapper.value:<13} {fit} "
                     f"mean ratio={float(np.mean(p.ratios())):.4f}")
    rep.text("summary", "\n".join(lines))


# ----------------------------------------------------------------------- glue


def run_command(cfg: ExperimentConfig, out_dir=None) -> Report:
    rep = Report(cfg, out_dir)  # fails before any computation if unwritable
    rep.config()
    if cfg.command == "train-compare":
        report_train_compare(cfg, run_train_compare(cfg), rep)
    elif cfg.command == "sensitivity":
        report_sensitivity(cfg, run_sensitivity(cfg), rep)
    elif cfg.command == "assertions":
        report_assertions(cfg, run_assertions(cfg), rep)
    elif cfg.command == "noise-sim":
        report_noise_sim(cfg, run_noise_sim(cfg), rep)
    elif cfg.command == "variance":
        report_variance(cfg, run_variance(cfg), rep)
    else:  # pragma: no cover - config validation rejects this earlier
        raise ValueError(cfg.command)
    return rep
