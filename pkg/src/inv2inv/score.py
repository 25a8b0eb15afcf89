"""Score models: an exact Gaussian-mixture oracle and a small MLP trained by DSM."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DomainError, NumericError, ShapeError, TrainingError
from .rng import CounterStream, Purpose, stream_id
from .sde import SdeSchedule

# A score model maps a batch ``y`` of shape (B, *event_shape) and a scalar
# time to an array shaped like ``y``.
ScoreModel = Callable[[np.ndarray, float], np.ndarray]


_GEMM_DIM = 64


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic Gaussian mixture in ``D`` dimensions."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.asarray(self.variances, dtype=np.float64).reshape(-1)
        if v.size == 1 and len(w) > 1:
            v = np.full(len(w), float(v[0]))
        if not (len(w) == len(mu) == len(v)):
            raise ShapeError("weights, means and variances disagree on component count")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("mixture weights must be nonnegative and sum to 1")
        if np.any(v <= 0):
            raise DomainError("component variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _perturbed(self, sched: SdeSchedule, t: float):
        a, s = sched.alpha_sigma(t)
        # a^2 v + s^2 rewritten with a^2 = 1 - s^2; exact for unit variances
        return a * self.means, self.variances + (1.0 - self.variances) * (s * s)

    def _log_terms(self, sched, y, t):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != self.dim:
            raise ShapeError(f"point dimension {y.shape[-1]} != mixture dimension {self.dim}")
        if np.any(np.isnan(y)):
            raise NumericError("NaN in score query")
        mu, var = self._perturbed(sched, t)
        if self.dim >= _GEMM_DIM:
            # ||y - mu||^2 expanded so the cross term is one matrix product
            sq = (np.einsum("...d,...d->...", y, y)[..., None] - 2.0 * (y @ mu.T)
                  + np.einsum("kd,kd->k", mu, mu))
            sq = np.maximum(sq, 0.0)
        else:
            diff = y[..., None, :] - mu  # (..., K, D)
            sq = np.einsum("...kd,...kd->...k", diff, diff)
        logn = -0.5 * sq / var - 0.5 * self.dim * np.log(2.0 * np.pi * var)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw + logn, mu, var

    def log_density(self, sched: SdeSchedule, y, t: float):
        terms, _, _ = self._log_terms(sched, y, t)
        mx = terms.max(axis=-1, keepdims=True)
        return (mx + np.log(np.exp(terms - mx).sum(axis=-1, keepdims=True)))[..., 0]

    def score(self, sched: SdeSchedule, y, t: float) -> np.ndarray:
        terms, mu, var = self._log_terms(sched, y, t)
        mx = terms.max(axis=-1, keepdims=True)
        r = np.exp(terms - mx)
        r /= r.sum(axis=-1, keepdims=True)  # posterior responsibilities
        rv = r / var
        y = np.asarray(y, dtype=np.float64)
        return rv @ mu - rv.sum(axis=-1, keepdims=True) * y

    def sample(self, n: int, stream: CounterStream) -> np.ndarray:
        u = stream.uniform((n,))
        comp = np.searchsorted(np.cumsum(self.weights), u, side="right")
        comp = np.minimum(comp, len(self.weights) - 1)
        z = stream.normal((n, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp])[:, None] * z

    def covariance(self) -> np.ndarray:
        m = self.weights @ self.means
        second = np.einsum("k,kd,ke->de", self.weights, self.means, self.means)
        second += np.eye(self.dim) * (self.weights @ self.variances)
        return second - np.outer(m, m)


def gmm_score(gm: GaussianMixture, sched: SdeSchedule, y, t: float) -> np.ndarray:
    return gm.score(sched, y, t)


@dataclass(frozen=True)
class GmmScore:
    """Score model backed by a mixture over flattened images."""

    gm: GaussianMixture
    sched: SdeSchedule

    def __call__(self, y: np.ndarray, t: float) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return self.gm.score(self.sched, y.reshape(y.shape[0], -1), t).reshape(y.shape)


# --- score network -------------------------------------------------------

TIME_FEATURES = 32
HIDDEN = 256
PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


def time_features(t) -> np.ndarray:
    """Sinusoidal embedding of width 32 for times in ``[0, T]``."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    freqs = np.exp(np.linspace(0.0, np.log(200.0), TIME_FEATURES // 2))
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


@dataclass
class GaussianPrior:
    """Fixed linear score of a Gaussian fitted to data, used as a skip path.

    The covariance is kept as ``basis @ diag(eigvals) @ basis.T`` plus
    ``rest_var`` on the orthogonal complement, so the perturbed score is
    ``-(alpha^2 C + sigma^2 I)^{-1} (y - alpha mean)`` at low-rank cost.
    """

    mean: np.ndarray
    basis: np.ndarray  # (D, r) orthonormal columns
    eigvals: np.ndarray  # (r,)
    rest_var: float = 1.0

    @classmethod
    def fit(cls, data, rank: int = 64, floor: float = 1e-4) -> "GaussianPrior":
        x = np.asarray(data, dtype=np.float64)
        x = x.reshape(x.shape[0], -1)
        n, d = x.shape
        mean = x.mean(axis=0)
        xc = x - mean
        _, sv, vt = np.linalg.svd(xc, full_matrices=False)
        ev = sv**2 / max(n - 1, 1)
        r = min(rank, d, len(ev))
        total = float(np.sum(xc * xc)) / max(n - 1, 1)
        rest = (total - float(ev[:r].sum())) / (d - r) if d > r else floor
        return cls(mean, vt[:r].T.copy(), np.maximum(ev[:r], floor), max(rest, floor))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def score(self, x, alpha, sigma) -> np.ndarray:
        """Score of the perturbed Gaussian at flattened points ``x`` (B, D)."""
        a = alpha[:, None]
        s2 = (sigma * sigma)[:, None]
        d = x - a * self.mean
        inv_rest = 1.0 / (a * a * self.rest_var + s2)  # (B, 1)
        out = inv_rest * d
        if self.basis.shape[1]:
            p = d @ self.basis
            inv_top = 1.0 / (a * a * self.eigvals[None, :] + s2)
            out = out + ((inv_top - inv_rest) * p) @ self.basis.T
        return -out


def _silu(a):
    s = expit(a)
    return a * s, s


@dataclass
class ScoreNet:
    """Two hidden SiLU layers of width 256 on ``[flatten(y), time_features(t)]``.

    ``score = prior.score(y) + raw / sigma(t)`` where the optional prior is a
    fixed Gaussian skip path and the head learns the non-Gaussian residual.
    A width-256 bottleneck cannot carry an identity map on 3072-dim images,
    so without the skip the learned score loses every direction outside a
    256-dim subspace.  Without a prior the skip term is zero.
    """

    event_shape: tuple[int, ...]
    sched: SdeSchedule = field(default_factory=SdeSchedule)
    seed: int = 0
    hidden: int = HIDDEN
    params: dict[str, np.ndarray] | None = None
    prior: GaussianPrior | None = None

    def __post_init__(self):
        self.event_shape = tuple(int(d) for d in self.event_shape)
        if self.prior is not None and self.prior.dim != self.dim:
            raise ShapeError(f"prior dimension {self.prior.dim} != network dimension {self.dim}")
        if self.params is None:
            self.params = self.init_params(self.seed)
        for name, shape in self.param_shapes().items():
            if self.params[name].shape != shape:
                raise ShapeError(f"parameter {name} has shape {self.params[name].shape}, want {shape}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.event_shape))

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        d, h = self.dim, self.hidden
        return {"w1": (d + TIME_FEATURES, h), "b1": (h,), "w2": (h, h), "b2": (h,),
                "w3": (h, d), "b3": (d,)}

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        stream = CounterStream(seed, stream_id(Purpose.PARAM_INIT))
        out = {}
        for name, shape in self.param_shapes().items():
            if name.startswith("b"):
                out[name] = np.zeros(shape)
            else:
                out[name] = stream.normal(shape) / np.sqrt(shape[0])
        return out

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in PARAM_NAMES])

    def set_flat_params(self, flat: np.ndarray) -> None:
        pos = 0
        for n in PARAM_NAMES:
            shape = self.param_shapes()[n]
            size = int(np.prod(shape))
            self.params[n] = np.array(flat[pos : pos + size]).reshape(shape)
            pos += size

    def copy(self) -> "ScoreNet":
        return ScoreNet(self.event_shape, self.sched, self.seed, self.hidden,
                        {k: v.copy() for k, v in self.params.items()}, self.prior)

    def _flatten(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[1:] != self.event_shape:
            raise ShapeError(f"input shape {y.shape[1:]} != network event shape {self.event_shape}")
        return y.reshape(y.shape[0], -1)

    def _forward(self, x, t):
        p = self.params
        B = x.shape[0]
        tt = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
        h0 = np.concatenate([x, time_features(tt)], axis=1)
        a1 = h0 @ p["w1"] + p["b1"]
        h1, s1 = _silu(a1)
        a2 = h1 @ p["w2"] + p["b2"]
        h2, s2 = _silu(a2)
        raw = h2 @ p["w3"] + p["b3"]
        alpha, sigma = self.sched.alpha_sigma(tt)
        skip = 0.0 if self.prior is None else self.prior.score(x, alpha, sigma)
        return raw, sigma, skip, (h0, a1, h1, s1, a2, h2, s2)

    def __call__(self, y: np.ndarray, t) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if y.shape == self.event_shape:
            return self(y[None], t)[0]
        raw, sigma, skip, _ = self._forward(self._flatten(y), t)
        return (skip + raw / sigma[:, None]).reshape(y.shape)

    def _backward(self, cache, d_raw):
        p = self.params
        h0, a1, h1, s1, a2, h2, s2 = cache
        g = {"w3": h2.T @ d_raw, "b3": d_raw.sum(axis=0)}
        d_h2 = d_raw @ p["w3"].T
        d_a2 = d_h2 * (s2 * (1.0 + a2 * (1.0 - s2)))
        g["w2"] = h1.T @ d_a2
        g["b2"] = d_a2.sum(axis=0)
        d_h1 = d_a2 @ p["w2"].T
        d_a1 = d_h1 * (s1 * (1.0 + a1 * (1.0 - s1)))
        g["w1"] = h0.T @ d_a1
        g["b1"] = d_a1.sum(axis=0)
        return g

    def dsm_loss_and_grad(self, y0, t_draws, z_draws, weighting: str = "none"):
        """DSM loss on one batch and its parameter gradient.

        ``weighting="sigma2"`` multiplies each sample's term by ``sigma(t)^2``
        (noise-prediction form); the minimiser is the same score.
        """
        x0 = self._flatten(y0)
        z = self._flatten(z_draws)
        t = np.asarray(t_draws, dtype=np.float64).reshape(-1)
        if x0.shape[0] == 0:
            raise ShapeError("empty batch")
        if t.shape[0] != x0.shape[0] or z.shape != x0.shape:
            raise ShapeError("batch, times and noises disagree in size")
        alpha, sigma = self.sched.alpha_sigma(t)
        if np.any(sigma <= 0):
            raise DomainError("DSM needs sigma(t) > 0 for every drawn time")
        yt = alpha[:, None] * x0 + sigma[:, None] * z
        raw, _, skip, cache = self._forward(yt, t)
        resid = skip + (raw + z) / sigma[:, None]  # = score + z / sigma
        B = x0.shape[0]
        if weighting == "sigma2":
            resid = resid * sigma[:, None]
            loss = float(np.sum(resid * resid) / B)
            d_raw = (2.0 / B) * resid
        elif weighting == "none":
            loss = float(np.sum(resid * resid) / B)
            d_raw = (2.0 / B) * resid / sigma[:, None]
        else:
            raise DomainError(f"unknown DSM weighting {weighting!r}")
        return loss, self._backward(cache, d_raw)


def net_score(net: ScoreNet, y, t) -> np.ndarray:
    return net(y, t)


def dsm_loss(net: ScoreNet, sched: SdeSchedule, batch, t_draws, z_draws) -> float:
    """Mean over the batch of ``||net(alpha y0 + sigma z, t) + z / sigma||^2``."""
    if sched != net.sched:
        net = ScoreNet(net.event_shape, sched, net.seed, net.hidden, net.params, net.prior)
    loss, _ = net.dsm_loss_and_grad(np.asarray(batch), t_draws, z_draws)
    return loss


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    iterations: int = 20_000
    t_min_frac: float = 0.01
    seed: int = 0
    log_interval: int = 100
    weighting: str = "none"  # "sigma2", or "auto": sigma2 when data is wider than the net
    # fit the Gaussian skip path first; None fits it only when the data
    # dimension exceeds the hidden width
    fit_prior: bool | None = None
    prior_rank: int = 64

    def __post_init__(self):
        if self.weighting not in ("none", "sigma2", "auto"):
            raise DomainError(f"unknown DSM weighting {self.weighting!r}")
        if not self.t_min_frac > 0:
            raise DomainError("t_min must be positive")
        if self.batch_size < 1 or self.iterations < 0 or self.log_interval < 1:
            raise DomainError(f"invalid training config {self}")


@dataclass
class TrainResult:
    net: ScoreNet
    losses: np.ndarray  # mean minibatch loss over each log interval
    checkpoints: list[ScoreNet] = field(default_factory=list)


def train_dsm(net: ScoreNet, sched: SdeSchedule, dataset, cfg: TrainConfig,
              checkpoint_every: int | None = None,
              progress: Callable[[int, float], None] | None = None) -> TrainResult:
    """Plain minibatch SGD on the DSM loss; returns a trained copy of ``net``.

    Times are uniform on ``[t_min_frac * T, T]``.  All draws come from streams
    keyed by ``cfg.seed`` so two runs with equal inputs agree bit for bit.
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.shape[0] == 0:
        raise DomainError("empty dataset")
    net = net.copy()
    net.sched = sched
    wide = net.dim > net.hidden
    weighting = cfg.weighting if cfg.weighting != "auto" else ("sigma2" if wide else "none")
    if cfg.fit_prior if cfg.fit_prior is not None else wide:
        net.prior = GaussianPrior.fit(data, cfg.prior_rank)
    s_idx = CounterStream(cfg.seed, stream_id(Purpose.TRAIN_INDEX))
    s_time = CounterStream(cfg.seed, stream_id(Purpose.TRAIN_TIME))
    s_noise = CounterStream(cfg.seed, stream_id(Purpose.TRAIN_NOISE))
    t_lo = cfg.t_min_frac * sched.T
    losses, window, checkpoints = [], [], []
    for it in range(cfg.iterations):
        idx = s_idx.integers(data.shape[0], cfg.batch_size)
        t = t_lo + (sched.T - t_lo) * s_time.uniform((cfg.batch_size,))
        z = s_noise.normal((cfg.batch_size,) + data.shape[1:])
        # overflow surfaces as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = net.dsm_loss_and_grad(data[idx], t, z, weighting)
        if not np.isfinite(loss):
            raise TrainingError(it + 1, loss)
        for name, g in grads.items():
            net.params[name] -= cfg.learning_rate * g
        window.append(loss)
        if (it + 1) % cfg.log_interval == 0:
            losses.append(float(np.mean(window)))
            window = []
            if progress is not None:
                progress(it + 1, losses[-1])
        if checkpoint_every and (it + 1) % checkpoint_every == 0:
            checkpoints.append(net.copy())
    return TrainResult(net, np.array(losses), checkpoints)


def grid_mse(score: ScoreModel, gm: GaussianMixture, sched: SdeSchedule,
             points: np.ndarray, times: Sequence[float]) -> tuple[float, float]:
    """Mean squared error to the mixture score and mean squared oracle norm."""
    err, norm = 0.0, 0.0
    for t in times:
        ref = gm.score(sched, points, t)
        est = score(points, t)
        err += np.mean(np.sum((est - ref) ** 2, axis=1))
        norm += np.mean(np.sum(ref**2, axis=1))
    return err / len(times), norm / len(times)
