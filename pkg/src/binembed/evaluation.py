"""Experiment drivers and Monte-Carlo oracles.

Sweeps measure worst-case pairwise distortion against the number of bits on
fresh synthetic data; the retrieval harness scores k-NN recall under code
distances; the oracles estimate sign-flip and independence probabilities
that the embedders rely on.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import stats

from .core import (
    Algorithm,
    BinembedError,
    Dataset,
    DimensionMismatch,
    EmbedderConfig,
    SeedTree,
    as_seed_tree,
)
from .embedders import Embedder, fit, sign_quantize
from .metrics import code_distance_matrix, geodesic, geodesic_matrix, pairwise_distortion
from .transforms import (
    HadamardSketch,
    build_hadamard_sketch,
    build_toeplitz_block,
    fwht,
    sketch_apply,
    toeplitz_apply,
    toeplitz_apply_naive,
)

log = logging.getLogger(__name__)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, SeedTree):
        return seed.rng("gaussian_dense")
    return np.random.default_rng(seed)


def _ms(t0: float) -> float:
    return (time.perf_counter() - t0) * 1e3


def gen_sphere_dataset(n_points: int, dim: int, seed: SeedTree | int, index: int = 0) -> Dataset:
    """N i.i.d. uniform points on the unit sphere (normalized Gaussian vectors)."""
    if n_points < 1 or dim < 2:
        raise BinembedError(f"need N >= 1 and p >= 2, got N={n_points}, p={dim}")
    g = as_seed_tree(seed).rng("dataset", index).standard_normal((n_points, dim))
    return Dataset.normalized(g)


def default_metric(algorithm) -> str:
    return "median_block" if Algorithm.parse(algorithm) is Algorithm.FBE else "hamming"


# ---------------------------------------------------------------------------
# Distortion sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRecord:
    algorithm: str
    N: int
    p: int
    m: int
    n: int
    B: int
    seed: int
    trial: int
    max_distortion: float
    mean_distortion: float
    fit_ms: float
    embed_ms: float

    def key(self):
        """Everything except wall times; equal keys mean the run was reproduced."""
        d = asdict(self)
        d.pop("fit_ms")
        d.pop("embed_ms")
        return tuple(d.values())


SWEEP_COLUMNS = [f.name for f in fields(SweepRecord)]


def _trial_tree(seed: int, n_points: int, trial: int) -> SeedTree:
    return SeedTree(seed).child(n_points).child(trial)


def _measure(algorithm, data: Dataset, m: int, tree: SeedTree, G: np.ndarray,
             seed: int, trial: int, n=None, B=None) -> SweepRecord:
    cfg = EmbedderConfig.with_defaults(algorithm, data.dim, m, n_points=data.n_points,
                                       intermediate_dim=n, blocks=B, seed=tree.child(m))
    t0 = time.perf_counter()
    e = fit(cfg)
    fit_ms = _ms(t0)
    t0 = time.perf_counter()
    codes = e.embed_batch(data)
    embed_ms = _ms(t0)
    rep = pairwise_distortion(data, codes, default_metric(cfg.algorithm), geodesics=G)
    return SweepRecord(cfg.algorithm.value, data.n_points, data.dim, m,
                       cfg.intermediate_dim or 0, cfg.blocks, seed, trial,
                       rep.max_abs_distortion, rep.mean_abs_distortion, fit_ms, embed_ms)


def run_sweep_cell(algorithm, n_points: int, p: int, m: int, seed: int, trial: int,
                   n: int | None = None, B: int | None = None) -> SweepRecord:
    """Recompute a single sweep row from its identifiers."""
    tree = _trial_tree(seed, n_points, trial)
    data = gen_sphere_dataset(n_points, p, tree)
    return _measure(algorithm, data, m, tree, geodesic_matrix(data), seed, trial, n, B)


def distortion_sweep(Ns, ms, p: int, algorithms, trials: int, seed: int = 0,
                     threads: int = 1, n: int | None = None, B: int | None = None) -> list[SweepRecord]:
    """One record per (N, trial, algorithm, m).

    Each (N, trial) draws one fresh dataset shared by all algorithms and code
    lengths, so curves within a trial are paired.
    """
    algorithms = [Algorithm.parse(a) for a in algorithms]
    if trials < 1:
        raise BinembedError("trials must be >= 1")
    for N in Ns:
        for a in algorithms:
            for m in ms:
                EmbedderConfig.with_defaults(a, p, m, n_points=N, intermediate_dim=n, blocks=B)

    def cell(args):
        N, trial = args
        tree = _trial_tree(seed, N, trial)
        data = gen_sphere_dataset(N, p, tree)
        G = geodesic_matrix(data)
        out = [_measure(a, data, m, tree, G, seed, trial, n, B) for a in algorithms for m in ms]
        log.debug("sweep cell N=%d trial=%d done", N, trial)
        return out

    cells = [(N, t) for N in Ns for t in range(trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(cell, cells))
    else:
        results = [cell(c) for c in cells]
    return [r for rs in results for r in rs]


def aggregate(records) -> list[dict]:
    """Mean and standard deviation of max distortion per (algorithm, N, m)."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.algorithm, r.N, r.m), []).append(r.max_distortion)
    out = []
    for (a, N, m), v in sorted(groups.items()):
        v = np.asarray(v)
        out.append(dict(algorithm=a, N=N, m=m, trials=v.size,
                        mean_max_distortion=float(v.mean()),
                        std_max_distortion=float(v.std(ddof=1)) if v.size > 1 else 0.0))
    return out


class NotBracketed(BinembedError):
    pass


def m_for_target_delta(sweep, target: float, algorithm=None) -> dict[int, float]:
    """Per N, the interpolated m at which mean max-distortion first reaches ``target``.

    Averages are taken over trials; the answer lies on the segment between the
    last m above the target and the first m at or below it.
    """
    algos = {r.algorithm for r in sweep}
    if algorithm is None:
        if len(algos) != 1:
            raise BinembedError(f"sweep mixes algorithms {sorted(algos)}; pass algorithm=")
        algorithm = algos.pop()
    else:
        algorithm = Algorithm.parse(algorithm).value
    rows = [g for g in aggregate(sweep) if g["algorithm"] == algorithm]
    result = {}
    for N in sorted({g["N"] for g in rows}):
        curve = sorted((g["m"], g["mean_max_distortion"]) for g in rows if g["N"] == N)
        hit = next((i for i, (_, d) in enumerate(curve) if d <= target), None)
        if hit is None:
            raise NotBracketed(f"N={N}: no m in the sweep reaches delta <= {target}")
        if hit == 0:
            raise NotBracketed(f"N={N}: smallest m={curve[0][0]} already reaches delta <= {target}")
        (m0, d0), (m1, d1) = curve[hit - 1], curve[hit]
        result[N] = m0 + (target - d0) * (m1 - m0) / (d1 - d0)
    return result


def fit_against_log(Ns, values):
    """Least-squares line values ~ a + b ln N; returns (slope, intercept, r_squared)."""
    res = stats.linregress(np.log(np.asarray(Ns, dtype=float)), np.asarray(values, dtype=float))
    return res.slope, res.intercept, res.rvalue ** 2


def write_csv(path_or_file, rows, columns):
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            d = asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r)
            w.writerow({c: (repr(d[c]) if isinstance(d[c], float) else d[c]) for c in columns})
    finally:
        if own:
            f.close()


def read_sweep_csv(path) -> list[SweepRecord]:
    with open(path, newline="") as f:
        out = []
        for row in csv.DictReader(f):
            out.append(SweepRecord(
                algorithm=row["algorithm"], N=int(row["N"]), p=int(row["p"]), m=int(row["m"]),
                n=int(row["n"]), B=int(row["B"]), seed=int(row["seed"]), trial=int(row["trial"]),
                max_distortion=float(row["max_distortion"]),
                mean_distortion=float(row["mean_distortion"]),
                fit_ms=float(row["fit_ms"]), embed_ms=float(row["embed_ms"]),
            ))
        return out


# ---------------------------------------------------------------------------
# Retrieval
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RetrievalResult:
    k_relevant: int
    n_queries: int
    recall: float
    embed_ms: float = 0.0
    query_ms: float = 0.0


RETRIEVAL_COLUMNS = ["algorithm", "m", "n", "B", "k", "n_queries", "recall", "embed_ms", "query_ms"]


def _top_k(D: np.ndarray, k: int) -> np.ndarray:
    # stable sort: equal distances keep ascending base index
    return np.argsort(D, axis=1, kind="stable")[:, :k]


def retrieval_eval(base: Dataset, queries: Dataset, k: int, e: Embedder | None = None,
                   metric: str = "hamming") -> RetrievalResult:
    """Recall of the k code-space nearest neighbors against the k geodesic ones.

    ``metric="geodesic"`` ranks by the true distance and ignores ``e``; it
    exists to check the harness itself.
    """
    if base.dim != queries.dim:
        raise DimensionMismatch(f"base dim {base.dim} != query dim {queries.dim}")
    if not 1 <= k < base.n_points:
        raise BinembedError(f"k={k} must lie in [1, {base.n_points - 1}]")
    G = geodesic_matrix(queries, base)
    relevant = _top_k(G, k)
    embed_ms = 0.0
    t0 = time.perf_counter()
    if metric == "geodesic":
        D = G
    else:
        if e is None:
            raise BinembedError(f"metric {metric!r} needs an embedder")
        codes_b = e.embed_batch(base)
        codes_q = e.embed_batch(queries)
        embed_ms = _ms(t0)
        t0 = time.perf_counter()
        D = code_distance_matrix(codes_q, codes_b, metric)
    retrieved = _top_k(D, k)
    query_ms = _ms(t0)
    hits = sum(np.intersect1d(r, g, assume_unique=True).size for r, g in zip(retrieved, relevant))
    return RetrievalResult(k, queries.n_points, hits / (k * queries.n_points), embed_ms, query_ms)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def tessellation_oracle(x, y, trials: int, seed=0, chunk: int = 8192) -> float:
    """Fraction of i.i.d. Gaussian hyperplanes separating x and y."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    if trials < 1:
        raise BinembedError("trials must be >= 1")
    rng = _rng(seed)
    flips = 0
    for s in range(0, trials, chunk):
        A = rng.standard_normal((min(chunk, trials - s), x.shape[0]))
        flips += int(np.count_nonzero(sign_quantize(A @ x) != sign_quantize(A @ y)))
    return flips / trials


@dataclass(frozen=True)
class IndependenceTable:
    """Frequencies of the sign variables X, Y (row r) and X', Y' (row r').

    ``joint[pair]`` is a 2x2 array indexed by (first == +1, second == +1).
    """

    trials: int
    marginal: dict
    agreement: dict
    joint: dict


INDEPENDENCE_PAIRS = (("X", "X'"), ("X", "Y'"), ("Y", "X'"), ("Y", "Y'"))


def independence_oracle(x, y, n: int, trials: int, seed=0, rows=(0, 1),
                        chunk: int = 8192) -> IndependenceTable:
    """Sample fresh Toeplitz generators and sign diagonals, tabulating the sign
    variables of two distinct rows applied to x and y."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != (n,) or y.shape != (n,):
        raise DimensionMismatch(f"x and y must have length n={n}")
    r0, r1 = rows
    if r0 == r1 or not (0 <= r0 < n and 0 <= r1 < n):
        raise BinembedError(f"rows {rows} must be distinct indices in [0, {n})")
    rng = _rng(seed)
    j = np.arange(n)
    idx0, idx1 = r0 - j + n - 1, r1 - j + n - 1
    names = ("X", "Y", "X'", "Y'")
    counts = {pair: np.zeros((2, 2), dtype=np.int64) for pair in INDEPENDENCE_PAIRS}
    ones = dict.fromkeys(names, 0)
    for s in range(0, trials, chunk):
        c = min(chunk, trials - s)
        g = rng.standard_normal((c, 2 * n - 1))
        zeta = np.where(rng.integers(0, 2, size=(c, n)) == 1, 1.0, -1.0)
        row0, row1 = g[:, idx0] * zeta, g[:, idx1] * zeta
        v = dict(zip(names, (sign_quantize(row0 @ x), sign_quantize(row0 @ y),
                             sign_quantize(row1 @ x), sign_quantize(row1 @ y))))
        for name in names:
            ones[name] += int(v[name].sum())
        for a, b in INDEPENDENCE_PAIRS:
            np.add.at(counts[(a, b)], (v[a].astype(int), v[b].astype(int)), 1)
    joint = {p: c / trials for p, c in counts.items()}
    return IndependenceTable(
        trials=trials,
        marginal={k: v / trials for k, v in ones.items()},
        agreement={p: float(j[0, 0] + j[1, 1]) for p, j in joint.items()},
        joint=joint,
    )


@dataclass(frozen=True)
class JLReport:
    max_pair_distortion: float
    max_norm_deviation: float
    max_geodesic_deviation: float

    @property
    def norm_distortion(self) -> float:
        """Smallest delta for which both the pairwise and the norm bound hold."""
        return max(self.max_pair_distortion, self.max_norm_deviation)


def full_hadamard_sketch(p: int, seed) -> HadamardSketch:
    """Sketch that keeps every Hadamard row exactly once: an isometry on R^p."""
    base = build_hadamard_sketch(p, 1, seed)
    return HadamardSketch(p, np.array(base.diag_signs), np.arange(base.padded_dim))


def jl_distortion_oracle(s: HadamardSketch, d: Dataset) -> JLReport:
    if d.dim != s.input_dim:
        raise DimensionMismatch(f"dataset dim {d.dim} != sketch input dim {s.input_dim}")
    X = d.rows
    Y = sketch_apply(s, X)
    norms = np.linalg.norm(Y, axis=1)
    norm_dev = float(np.abs(norms - 1.0).max())
    pair = 0.0
    for i in range(d.n_points - 1):
        dx = np.linalg.norm(X[i] - X[i + 1:], axis=1)
        dy = np.linalg.norm(Y[i] - Y[i + 1:], axis=1)
        ok = dx > 0
        if ok.any():
            pair = max(pair, float((np.abs(dy[ok] - dx[ok]) / dx[ok]).max()))
    with np.errstate(invalid="ignore", divide="ignore"):
        Yn = Y / norms[:, None]
    Yn[norms == 0] = 0.0
    iu = np.triu_indices(d.n_points, k=1)
    geo = np.abs(geodesic_matrix(Yn)[iu] - geodesic_matrix(X)[iu])
    return JLReport(pair, norm_dev, float(geo.max()) if geo.size else 0.0)


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    observed: float
    allowed: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: observed {self.observed:.6g}, allowed {self.allowed:.6g} {self.detail}".rstrip()


def binomial_tolerance(q: float, trials: int, sigmas: float = 3.0) -> float:
    return sigmas * math.sqrt(q * (1 - q) / trials)


def pair_at_angle(degrees: float, p: int = 16, seed=0):
    """Two unit vectors in R^p at the given angle, in a random plane."""
    rng = _rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((p, 2)))
    t = math.radians(degrees)
    x = q[:, 0]
    y = math.cos(t) * q[:, 0] + math.sin(t) * q[:, 1]
    if degrees == 180:
        y = -x
    elif degrees == 0:
        y = x.copy()
    return x, y


def check_transforms(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_norm = worst_inv = 0.0
    for k in range(1, 13):
        v = rng.standard_normal(2 ** k)
        h = fwht(v)
        worst_norm = max(worst_norm, abs(np.linalg.norm(h) - np.linalg.norm(v)) / np.linalg.norm(v))
        worst_inv = max(worst_inv, np.linalg.norm(fwht(h) - v) / np.linalg.norm(v))
    worst_t = 0.0
    for i in range(200):
        n = int(rng.integers(1, 257))
        t = build_toeplitz_block(n, int(rng.integers(1, n + 1)), SeedTree(seed).child(i))
        yv = rng.standard_normal(n)
        ref = toeplitz_apply_naive(t, yv)
        worst_t = max(worst_t, np.linalg.norm(toeplitz_apply(t, yv) - ref) / max(np.linalg.norm(ref), 1e-300))
    return [
        Check("Hadamard transform preserves norms", worst_norm, 1e-6, worst_norm <= 1e-6),
        Check("Hadamard transform is an involution", worst_inv, 1e-6, worst_inv <= 1e-6),
        Check("fast Toeplitz product matches dense product", worst_t, 1e-8, worst_t <= 1e-8),
    ]


def check_tessellation(trials: int, seed: int = 0) -> list[Check]:
    out = []
    for i, deg in enumerate((0, 45, 90, 135, 180)):
        x, y = pair_at_angle(deg, seed=SeedTree(seed).child(i))
        d = geodesic(x, y)
        emp = tessellation_oracle(x, y, trials, seed=SeedTree(seed).child(100 + i))
        tol = binomial_tolerance(d, trials)
        out.append(Check(f"hyperplane flip rate equals geodesic distance at {deg} deg",
                         abs(emp - d), tol, abs(emp - d) <= tol, f"(rate {emp:.5f} vs d {d:.5f})"))
    return out


def check_independence(trials: int, seed: int = 0, n: int = 64) -> list[Check]:
    # tolerances are fixed at 1e5 trials and scale with 1/sqrt(trials)
    scale = math.sqrt(1e5 / trials)
    pair_tol, cell_tol = 0.005 * scale, 0.007 * scale
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    x /= np.linalg.norm(x)
    y /= np.linalg.norm(y)
    tab = independence_oracle(x, y, n, trials, seed=SeedTree(seed).child(1))
    out = []
    for name, q in tab.marginal.items():
        out.append(Check(f"Toeplitz sign {name} is balanced", abs(q - 0.5), pair_tol,
                         abs(q - 0.5) <= pair_tol))
    for pair, q in tab.agreement.items():
        label = f"Pr({pair[0]} = {pair[1]}) = 1/2 (pairwise independence)"
        out.append(Check(label, abs(q - 0.5), pair_tol, abs(q - 0.5) <= pair_tol))
    for pair, j in tab.joint.items():
        dev = float(np.abs(j - 0.25).max())
        out.append(Check(f"joint cells of ({pair[0]}, {pair[1]}) equal 1/4", dev, cell_tol,
                         dev <= cell_tol))
    return out


def jl_repetitions(reps: int = 100, p: int = 512, n: int = 1024, n_points: int = 100,
                   seed: int = 0) -> list[JLReport]:
    out = []
    for r in range(reps):
        tree = SeedTree(seed).child(r)
        data = gen_sphere_dataset(n_points, p, tree)
        out.append(jl_distortion_oracle(build_hadamard_sketch(p, n, tree), data))
    return out


def check_jl(reps: int = 100, seed: int = 0, bound: float = 0.3, geo_factor: float = 4.0,
             min_pass: int = 99) -> list[Check]:
    reports = jl_repetitions(reps, seed=seed)
    good = [r for r in reports if r.norm_distortion <= bound]
    ratios = [r.max_geodesic_deviation / r.norm_distortion for r in good if r.norm_distortion > 0]
    worst_ratio = max(ratios, default=0.0)
    return [
        Check(f"sketch distortion <= {bound} (runs passing of {reps})", len(good), min_pass,
              len(good) >= min_pass),
        Check("geodesic deviation / norm distortion", worst_ratio, geo_factor,
              worst_ratio <= geo_factor),
    ]


def run_verification(trials: int = 100_000, seed: int = 0, jl_reps: int = 100) -> list[Check]:
    checks = check_transforms(seed)
    checks += check_tessellation(trials, seed)
    checks += check_independence(trials, seed)
    checks += check_jl(jl_reps, seed, min_pass=math.ceil(0.99 * jl_reps))
    return checks
