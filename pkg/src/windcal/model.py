"""Joint Bayesian model for observed and simulated panels with EGPD margins.

Per-cell upper endpoints follow shifted-exponential laws whose rates are
log-linear in a shared spatial field over stations and a shared RW1
temporal field over days.  Inference is adaptive Metropolis-within-Gibbs
with a fixed update order and Robbins-Monro scale tuning frozen after
burn-in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, gammaln, logit

from .draws import PosteriorDraws
from .errors import DataValidationError, DomainError, NumericalError
from .latent import (
    CholFactor,
    cholesky_correlation,
    rw1_eigenvalues,
    rw1_logdensity,
    sample_rw1_constrained,
    sample_spatial_field,
    spatial_correlation,
    spatial_logdensity,
    StationNetwork,
)

TARGET_ACCEPT = 0.44


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of every prior; Gamma is shape-rate."""

    beta_mean: float = 0.0
    beta_precision: float = 0.01
    kappa_shape: float = 0.05
    kappa_rate: float = 0.05
    xi_low: float = -0.5
    xi_high: float = 0.0
    tau_shape: float = 1.0
    tau_rate: float = 0.1
    alpha_low: float = 0.1
    alpha_high: float = 0.5


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 4000
    burn_in: int = 1000
    thinning: int = 5
    chains: int = 1
    seed: int = 0
    adapt: bool = True
    target_accept: float = TARGET_ACCEPT

    def __post_init__(self):
        if self.thinning < 1:
            raise DomainError("thinning must be >= 1")
        if self.iterations == 0:
            if self.burn_in != 0:
                raise DomainError("zero-iteration run requires zero burn-in")
        elif not 0 <= self.burn_in < self.iterations:
            raise DomainError("burn-in must satisfy 0 <= burn_in < iterations")
        if self.chains < 1:
            raise DomainError("need at least one chain")


@dataclass
class ModelState:
    """One point in the posterior."""

    beta_y: float
    beta_x: float
    kappa_y: float
    kappa_x: float
    xi_y: float
    xi_x: float
    alpha: float
    tau_w: float
    tau_z: float
    w: np.ndarray        # (N_s,)
    z: np.ndarray        # (T,)
    delta_y: np.ndarray  # (N, T)
    delta_x: np.ndarray  # (N_s, T)

    SCALAR_NAMES = ("beta_y", "beta_x", "kappa_y", "kappa_x",
                    "xi_y", "xi_x", "alpha", "tau_w", "tau_z")

    def copy(self) -> "ModelState":
        return replace(self, w=self.w.copy(), z=self.z.copy(),
                       delta_y=self.delta_y.copy(), delta_x=self.delta_x.copy())


def _egpd_logpdf_grid(vals, delta, xi, kappa):
    """Elementwise EGPD log-density with per-cell endpoints; -inf off support."""
    inside = (vals > 0.0) & (vals < delta)
    base = np.where(inside, 1.0 - vals / delta, 0.5)
    sigma = -xi * delta
    log_h = -np.log(sigma) + (-1.0 / xi - 1.0) * np.log(base)
    log_big_h = np.log1p(-base ** (-1.0 / xi))
    return np.where(inside, math.log(kappa) + log_h + (kappa - 1.0) * log_big_h, -np.inf)


def _gamma_logpdf(x, shape, rate):
    if x <= 0:
        return -np.inf
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * math.log(x) - rate * x


def _normal_logpdf(x, mean, precision):
    return 0.5 * math.log(precision / (2.0 * math.pi)) - 0.5 * precision * (x - mean) ** 2


class HierarchicalModel:
    """Posterior kernel for one (observed panel, simulated panel, network) triple.

    Shifts of the endpoint priors default to the respective panel maxima;
    they can be fixed explicitly, which the simulation-based tests rely on.
    """

    def __init__(self, y, x, net: StationNetwork, priors: PriorSpec = PriorSpec(),
                 correlation_family: str = "disc",
                 shift_y: float | None = None, shift_x: float | None = None):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        if x.shape[0] != net.n_total:
            raise DataValidationError("simulated panel must cover all stations")
        if y.shape[0] != net.n_observed:
            raise DataValidationError("observed panel must cover exactly the observed stations")
        if y.shape[1] != x.shape[1]:
            raise DataValidationError("panels must share the time axis")
        if np.any(np.isnan(x)):
            raise DataValidationError("simulated panel must be complete")
        if np.any(y[~np.isnan(y)] < 0) or np.min(x) < 0:
            raise DataValidationError("panel values must be nonnegative")

        self.net = net
        self.y = y
        self.x = x
        self.y_mask = ~np.isnan(y)
        if not self.y_mask.any():
            raise DataValidationError("observed panel has no data")
        self.y_filled = np.where(self.y_mask, y, 0.5)  # placeholder under mask
        # defaulted shifts sit at the panel maxima; explicit shifts may be
        # below them (the likelihood still enforces delta > every datum)
        self.shift_y = float(np.nanmax(y)) if shift_y is None else float(shift_y)
        self.shift_x = float(np.max(x)) if shift_x is None else float(shift_x)
        self.priors = priors
        self.family = correlation_family
        self.d = net.scaled_distances
        self.obs_idx = net.observed_indices
        self.n_obs, self.n_total = y.shape[0], x.shape[0]
        self.n_times = y.shape[1]

    # -- correlation factor ------------------------------------------------

    def chol_factor(self, alpha: float) -> CholFactor:
        corr = spatial_correlation(self.d, alpha, self.family)
        return cholesky_correlation(corr, alpha_label=alpha)

    # -- per-cell endpoint-rate plumbing ------------------------------------

    def rates(self, beta, w_rows, z):
        """lambda(i, j) = exp(beta + w_i + z_j) for the given station rows."""
        eta = beta + w_rows[:, None] + z[None, :]
        with np.errstate(over="ignore"):
            return np.exp(eta)

    def delta_prior_grid(self, lam, delta, shift):
        """Shifted-exponential log-densities per cell; -inf where delta <= shift."""
        gap = delta - shift
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(gap > 0, np.log(lam) - lam * gap, -np.inf)
        return out

    # -- likelihood / prior / posterior --------------------------------------

    def loglik_y_grid(self, state: ModelState):
        grid = _egpd_logpdf_grid(self.y_filled, state.delta_y, state.xi_y, state.kappa_y)
        return np.where(self.y_mask, grid, 0.0)

    def loglik_x_grid(self, state: ModelState):
        return _egpd_logpdf_grid(self.x, state.delta_x, state.xi_x, state.kappa_x)

    def log_likelihood(self, state: ModelState) -> float:
        if not self._in_box(state):
            return -np.inf
        return float(self.loglik_y_grid(state).sum() + self.loglik_x_grid(state).sum())

    def _in_box(self, state: ModelState) -> bool:
        p = self.priors
        return (state.kappa_y > 0 and state.kappa_x > 0
                and p.xi_low < state.xi_y < p.xi_high
                and p.xi_low < state.xi_x < p.xi_high
                and p.alpha_low < state.alpha < p.alpha_high
                and state.tau_w > 0 and state.tau_z > 0)

    def log_prior(self, state: ModelState, factor: CholFactor | None = None) -> float:
        p = self.priors
        if not self._in_box(state):
            return -np.inf
        out = _normal_logpdf(state.beta_y, p.beta_mean, p.beta_precision)
        out += _normal_logpdf(state.beta_x, p.beta_mean, p.beta_precision)
        out += _gamma_logpdf(state.kappa_y, p.kappa_shape, p.kappa_rate)
        out += _gamma_logpdf(state.kappa_x, p.kappa_shape, p.kappa_rate)
        out -= 2.0 * math.log(p.xi_high - p.xi_low)
        out += _gamma_logpdf(state.tau_w, p.tau_shape, p.tau_rate)
        out += _gamma_logpdf(state.tau_z, p.tau_shape, p.tau_rate)
        out -= math.log(p.alpha_high - p.alpha_low)
        out += spatial_logdensity(state.w, state.alpha, state.tau_w, self.d,
                                  self.family, factor=factor)
        out += rw1_logdensity(state.z, state.tau_z)
        lam_y = self.rates(state.beta_y, state.w[self.obs_idx], state.z)
        lam_x = self.rates(state.beta_x, state.w, state.z)
        out += float(self.delta_prior_grid(lam_y, state.delta_y, self.shift_y).sum())
        out += float(self.delta_prior_grid(lam_x, state.delta_x, self.shift_x).sum())
        return out

    def log_posterior(self, state: ModelState) -> float:
        lp = self.log_prior(state)
        if not np.isfinite(lp):
            return -np.inf
        return lp + self.log_likelihood(state)

    # -- forward simulation ---------------------------------------------------

    def sample_prior_state(self, rng) -> ModelState:
        """Forward draw of every unknown given the fixed shifts."""
        p = self.priors
        beta_y = rng.normal(p.beta_mean, 1.0 / math.sqrt(p.beta_precision))
        beta_x = rng.normal(p.beta_mean, 1.0 / math.sqrt(p.beta_precision))
        kappa_y = rng.gamma(p.kappa_shape, 1.0 / p.kappa_rate)
        kappa_x = rng.gamma(p.kappa_shape, 1.0 / p.kappa_rate)
        xi_y = rng.uniform(p.xi_low, p.xi_high)
        xi_x = rng.uniform(p.xi_low, p.xi_high)
        alpha = rng.uniform(p.alpha_low, p.alpha_high)
        tau_w = rng.gamma(p.tau_shape, 1.0 / p.tau_rate)
        tau_z = rng.gamma(p.tau_shape, 1.0 / p.tau_rate)
        factor = self.chol_factor(alpha)
        w = sample_spatial_field(factor, tau_w, rng)
        z = sample_rw1_constrained(self.n_times, tau_z, rng)
        lam_y = self.rates(beta_y, w[self.obs_idx], z)
        lam_x = self.rates(beta_x, w, z)
        delta_y = self.shift_y + rng.exponential(1.0 / lam_y)
        delta_x = self.shift_x + rng.exponential(1.0 / lam_x)
        return ModelState(beta_y, beta_x, kappa_y, kappa_x, xi_y, xi_x,
                          alpha, tau_w, tau_z, w, z, delta_y, delta_x)

    def sample_panels(self, state: ModelState, rng):
        """Draw (y, x) panels from the EGPD cells of the given state."""
        u_y = rng.uniform(size=state.delta_y.shape)
        u_x = rng.uniform(size=state.delta_x.shape)
        y = state.delta_y * (1.0 - (1.0 - u_y ** (1.0 / state.kappa_y)) ** (-state.xi_y))
        x = state.delta_x * (1.0 - (1.0 - u_x ** (1.0 / state.kappa_x)) ** (-state.xi_x))
        # keep draws strictly inside the open support; rounding can otherwise
        # land exactly on 0 or the endpoint and zero out the likelihood
        y = np.clip(y, state.delta_y * 1e-12, state.delta_y * (1.0 - 1e-12))
        x = np.clip(x, state.delta_x * 1e-12, state.delta_x * (1.0 - 1e-12))
        y = np.where(self.y_mask, y, np.nan)
        return y, x

    def replace_data(self, y, x) -> None:
        """Swap the panels in place (simulation-based sampler checks only).

        The caller guarantees the new data respects the fixed shifts.
        """
        y = np.asarray(y, dtype=float)
        self.y = y
        self.y_mask = ~np.isnan(y)
        self.y_filled = np.where(self.y_mask, y, 0.5)
        self.x = np.asarray(x, dtype=float)

    # -- initialization ---------------------------------------------------------

    def initialize_state(self, seed=None) -> ModelState:
        sd_y = float(np.nanstd(self.y))
        sd_x = float(np.std(self.x))
        if sd_y <= 0 or sd_x <= 0:
            raise DataValidationError("degenerate (constant) panel; cannot initialize")
        state = ModelState(
            beta_y=0.0, beta_x=0.0, kappa_y=1.0, kappa_x=1.0,
            xi_y=-0.1, xi_x=-0.1, alpha=0.3, tau_w=1.0, tau_z=1.0,
            w=np.zeros(self.n_total), z=np.zeros(self.n_times),
            delta_y=np.full((self.n_obs, self.n_times),
                            max(self.shift_y, float(np.nanmax(self.y))) + sd_y),
            delta_x=np.full((self.n_total, self.n_times),
                            max(self.shift_x, float(np.max(self.x))) + sd_x),
        )
        lp = self.log_posterior(state)
        if not np.isfinite(lp):
            raise NumericalError("initial state has non-finite log-posterior")
        return state


# ---------------------------------------------------------------------------
# Sampler
# ---------------------------------------------------------------------------

def _logit_box(x, lo, hi):
    return logit((x - lo) / (hi - lo))


def _expit_box(t, lo, hi):
    return lo + (hi - lo) * expit(t)


def _log_jac_box(t, lo, hi):
    # |dx/dt| = (hi - lo) * p * (1 - p) for p = expit(t)
    return math.log(hi - lo) - t - 2.0 * math.log1p(math.exp(-t)) if t > 0 else \
        math.log(hi - lo) + t - 2.0 * math.log1p(math.exp(t))


class MwgSampler:
    """Adaptive single-site Metropolis-within-Gibbs over a HierarchicalModel.

    Update order per sweep is fixed: betas, kappas, xis, alpha, taus,
    each spatial site, each day (with recentring), then both endpoint
    panels in one vectorized block each.
    """

    SCALAR_BLOCKS = ("beta_y", "beta_x", "kappa_y", "kappa_x",
                     "xi_y", "xi_x", "alpha", "tau_w", "tau_z")

    def __init__(self, model: HierarchicalModel, state: ModelState, rng,
                 target_accept: float = TARGET_ACCEPT):
        self.model = model
        self.state = state.copy()
        self.rng = rng
        self.target = target_accept
        self.adapting = True
        self.iteration = 0
        m = model
        self.log_scales = {name: math.log(0.1) for name in self.SCALAR_BLOCKS}
        self.log_scales["w"] = np.full(m.n_total, math.log(0.3))
        self.log_scales["z"] = np.full(m.n_times, math.log(0.3))
        self.log_scales["delta_y"] = math.log(1.0)
        self.log_scales["delta_x"] = math.log(1.0)
        self.accept_counts = {k: 0.0 for k in list(self.SCALAR_BLOCKS) + ["w", "z", "delta_y", "delta_x"]}
        self.proposal_counts = {k: 0.0 for k in self.accept_counts}
        self.refresh_cache()

    # cached pieces of the log-posterior; every update maintains them
    def refresh_cache(self):
        m, s = self.model, self.state
        self.factor = m.chol_factor(s.alpha)
        self.quad_w = self.factor.quad_form(s.w)
        self.quad_z = float(np.sum(np.diff(s.z) ** 2))
        self.lam_y = m.rates(s.beta_y, s.w[m.obs_idx], s.z)
        self.lam_x = m.rates(s.beta_x, s.w, s.z)
        self.prior_dy = m.delta_prior_grid(self.lam_y, s.delta_y, m.shift_y)
        self.prior_dx = m.delta_prior_grid(self.lam_x, s.delta_x, m.shift_x)
        self.ll_y = m.loglik_y_grid(s)
        self.ll_x = m.loglik_x_grid(s)
        if not (np.isfinite(self.prior_dy.sum()) and np.isfinite(self.prior_dx.sum())
                and np.isfinite(self.ll_y.sum()) and np.isfinite(self.ll_x.sum())):
            raise NumericalError("non-finite log-posterior component at sampler start")

    def log_posterior(self) -> float:
        m, s = self.model, self.state
        p = m.priors
        out = _normal_logpdf(s.beta_y, p.beta_mean, p.beta_precision)
        out += _normal_logpdf(s.beta_x, p.beta_mean, p.beta_precision)
        out += _gamma_logpdf(s.kappa_y, p.kappa_shape, p.kappa_rate)
        out += _gamma_logpdf(s.kappa_x, p.kappa_shape, p.kappa_rate)
        out -= 2.0 * math.log(p.xi_high - p.xi_low)
        out += _gamma_logpdf(s.tau_w, p.tau_shape, p.tau_rate)
        out += _gamma_logpdf(s.tau_z, p.tau_shape, p.tau_rate)
        out -= math.log(p.alpha_high - p.alpha_low)
        n = s.w.size
        out += -0.5 * n * math.log(2 * math.pi) + 0.5 * n * math.log(s.tau_w) \
            - 0.5 * self.factor.logdet - 0.5 * s.tau_w * self.quad_w
        t = s.z.size
        logdet_z = float(np.sum(np.log(rw1_eigenvalues(t)))) if t > 1 else 0.0
        out += 0.5 * (t - 1) * math.log(s.tau_z / (2 * math.pi)) + 0.5 * logdet_z \
            - 0.5 * s.tau_z * self.quad_z
        out += float(self.prior_dy.sum() + self.prior_dx.sum())
        out += float(self.ll_y.sum() + self.ll_x.sum())
        return out

    # -- bookkeeping ------------------------------------------------------------

    def _adapt(self, name, accepted, idx=None):
        self.proposal_counts[name] += 1 if np.isscalar(accepted) else np.size(accepted)
        self.accept_counts[name] += float(np.sum(accepted))
        if not self.adapting:
            return
        gamma = (self.iteration + 1) ** -0.6
        move = gamma * (float(np.mean(accepted)) - self.target)
        if idx is None:
            if isinstance(self.log_scales[name], np.ndarray):
                self.log_scales[name] += move
            else:
                self.log_scales[name] = float(np.clip(self.log_scales[name] + move, -15.0, 10.0))
        else:
            self.log_scales[name][idx] = np.clip(self.log_scales[name][idx] + move, -15.0, 10.0)

    def _accept(self, log_ratio) -> bool:
        if not np.isfinite(log_ratio):
            return False
        return math.log(self.rng.uniform()) < log_ratio

    # -- scalar updates -----------------------------------------------------------

    def _update_beta(self, which: str):
        m, s = self.model, self.state
        p = m.priors
        cur = getattr(s, which)
        prop = cur + math.exp(self.log_scales[which]) * self.rng.standard_normal()
        if which == "beta_y":
            lam_new = m.rates(prop, s.w[m.obs_idx], s.z)
            prior_new = m.delta_prior_grid(lam_new, s.delta_y, m.shift_y)
            delta_sum = prior_new.sum() - self.prior_dy.sum()
        else:
            lam_new = m.rates(prop, s.w, s.z)
            prior_new = m.delta_prior_grid(lam_new, s.delta_x, m.shift_x)
            delta_sum = prior_new.sum() - self.prior_dx.sum()
        log_ratio = delta_sum \
            + _normal_logpdf(prop, p.beta_mean, p.beta_precision) \
            - _normal_logpdf(cur, p.beta_mean, p.beta_precision)
        acc = self._accept(log_ratio)
        if acc:
            setattr(s, which, prop)
            if which == "beta_y":
                self.lam_y, self.prior_dy = lam_new, prior_new
            else:
                self.lam_x, self.prior_dx = lam_new, prior_new
        self._adapt(which, acc)

    def _update_kappa(self, which: str):
        m, s = self.model, self.state
        p = m.priors
        cur = getattr(s, which)
        prop = cur * math.exp(math.exp(self.log_scales[which]) * self.rng.standard_normal())
        if prop <= 0 or not np.isfinite(prop):
            self._adapt(which, False)
            return
        if which == "kappa_y":
            ll_new = np.where(m.y_mask,
                              _egpd_logpdf_grid(m.y_filled, s.delta_y, s.xi_y, prop), 0.0)
            delta_ll = ll_new.sum() - self.ll_y.sum()
        else:
            ll_new = _egpd_logpdf_grid(m.x, s.delta_x, s.xi_x, prop)
            delta_ll = ll_new.sum() - self.ll_x.sum()
        log_ratio = delta_ll \
            + _gamma_logpdf(prop, p.kappa_shape, p.kappa_rate) \
            - _gamma_logpdf(cur, p.kappa_shape, p.kappa_rate) \
            + math.log(prop) - math.log(cur)  # log-scale Jacobian
        acc = self._accept(log_ratio)
        if acc:
            setattr(s, which, prop)
            if which == "kappa_y":
                self.ll_y = ll_new
            else:
                self.ll_x = ll_new
        self._adapt(which, acc)

    def _update_xi(self, which: str):
        m, s = self.model, self.state
        p = m.priors
        cur = getattr(s, which)
        t_cur = _logit_box(cur, p.xi_low, p.xi_high)
        t_prop = t_cur + math.exp(self.log_scales[which]) * self.rng.standard_normal()
        prop = _expit_box(t_prop, p.xi_low, p.xi_high)
        if not (p.xi_low < prop < p.xi_high):
            self._adapt(which, False)
            return
        if which == "xi_y":
            ll_new = np.where(m.y_mask,
                              _egpd_logpdf_grid(m.y_filled, s.delta_y, prop, s.kappa_y), 0.0)
            delta_ll = ll_new.sum() - self.ll_y.sum()
        else:
            ll_new = _egpd_logpdf_grid(m.x, s.delta_x, prop, s.kappa_x)
            delta_ll = ll_new.sum() - self.ll_x.sum()
        log_ratio = delta_ll \
            + _log_jac_box(t_prop, p.xi_low, p.xi_high) \
            - _log_jac_box(t_cur, p.xi_low, p.xi_high)
        acc = self._accept(log_ratio)
        if acc:
            setattr(s, which, prop)
            if which == "xi_y":
                self.ll_y = ll_new
            else:
                self.ll_x = ll_new
        self._adapt(which, acc)

    def _update_alpha(self):
        m, s = self.model, self.state
        p = m.priors
        t_cur = _logit_box(s.alpha, p.alpha_low, p.alpha_high)
        t_prop = t_cur + math.exp(self.log_scales["alpha"]) * self.rng.standard_normal()
        prop = _expit_box(t_prop, p.alpha_low, p.alpha_high)
        if not (p.alpha_low < prop < p.alpha_high):
            self._adapt("alpha", False)
            return
        try:
            factor_new = m.chol_factor(prop)
        except NumericalError:
            self._adapt("alpha", False)
            return
        quad_new = factor_new.quad_form(s.w)
        log_ratio = -0.5 * (factor_new.logdet - self.factor.logdet) \
            - 0.5 * s.tau_w * (quad_new - self.quad_w) \
            + _log_jac_box(t_prop, p.alpha_low, p.alpha_high) \
            - _log_jac_box(t_cur, p.alpha_low, p.alpha_high)
        acc = self._accept(log_ratio)
        if acc:
            s.alpha = prop
            self.factor = factor_new
            self.quad_w = quad_new
        self._adapt("alpha", acc)

    def _update_tau(self, which: str):
        m, s = self.model, self.state
        p = m.priors
        cur = getattr(s, which)
        prop = cur * math.exp(math.exp(self.log_scales[which]) * self.rng.standard_normal())
        if prop <= 0 or not np.isfinite(prop):
            self._adapt(which, False)
            return
        if which == "tau_w":
            n_eff, quad = s.w.size, self.quad_w
        else:
            n_eff, quad = s.z.size - 1, self.quad_z
        log_ratio = 0.5 * n_eff * (math.log(prop) - math.log(cur)) \
            - 0.5 * quad * (prop - cur) \
            + _gamma_logpdf(prop, p.tau_shape, p.tau_rate) \
            - _gamma_logpdf(cur, p.tau_shape, p.tau_rate) \
            + math.log(prop) - math.log(cur)
        acc = self._accept(log_ratio)
        if acc:
            setattr(s, which, prop)
        self._adapt(which, acc)

    # -- latent field updates ------------------------------------------------------

    def _update_w(self):
        m, s = self.model, self.state
        obs_row = {int(site): r for r, site in enumerate(m.obs_idx)}
        for i in range(m.n_total):
            step = math.exp(self.log_scales["w"][i]) * self.rng.standard_normal()
            w_new = s.w.copy()
            w_new[i] += step
            quad_new = self.factor.quad_form(w_new)
            log_ratio = -0.5 * s.tau_w * (quad_new - self.quad_w)
            lam_x_row = m.rates(s.beta_x, w_new[i:i + 1], s.z)[0]
            prior_x_row = m.delta_prior_grid(lam_x_row[None, :], s.delta_x[i:i + 1],
                                             m.shift_x)[0]
            log_ratio += prior_x_row.sum() - self.prior_dx[i].sum()
            r = obs_row.get(i)
            if r is not None:
                lam_y_row = m.rates(s.beta_y, w_new[i:i + 1], s.z)[0]
                prior_y_row = m.delta_prior_grid(lam_y_row[None, :], s.delta_y[r:r + 1],
                                                 m.shift_y)[0]
                log_ratio += prior_y_row.sum() - self.prior_dy[r].sum()
            acc = self._accept(log_ratio)
            if acc:
                s.w = w_new
                self.quad_w = quad_new
                self.lam_x[i] = lam_x_row
                self.prior_dx[i] = prior_x_row
                if r is not None:
                    self.lam_y[r] = lam_y_row
                    self.prior_dy[r] = prior_y_row
            self._adapt("w", acc, idx=i)

    def _update_z(self):
        # proposal direction e_j - 1/T keeps sum(z) = 0 and is symmetric
        m, s = self.model, self.state
        t = m.n_times
        for j in range(t):
            eps = math.exp(self.log_scales["z"][j]) * self.rng.standard_normal()
            dz = np.full(t, -eps / t)
            dz[j] += eps
            z_new = s.z + dz
            quad_new = float(np.sum(np.diff(z_new) ** 2))
            scale = np.exp(dz)
            lam_y_new = self.lam_y * scale[None, :]
            lam_x_new = self.lam_x * scale[None, :]
            prior_dy_new = m.delta_prior_grid(lam_y_new, s.delta_y, m.shift_y)
            prior_dx_new = m.delta_prior_grid(lam_x_new, s.delta_x, m.shift_x)
            log_ratio = -0.5 * s.tau_z * (quad_new - self.quad_z) \
                + prior_dy_new.sum() - self.prior_dy.sum() \
                + prior_dx_new.sum() - self.prior_dx.sum()
            acc = self._accept(log_ratio)
            if acc:
                s.z = z_new
                self.quad_z = quad_new
                self.lam_y, self.lam_x = lam_y_new, lam_x_new
                self.prior_dy, self.prior_dx = prior_dy_new, prior_dx_new
            self._adapt("z", acc, idx=j)

    # -- endpoint panels -------------------------------------------------------------

    def _update_delta(self, which: str):
        m, s = self.model, self.state
        if which == "delta_y":
            delta, shift, lam = s.delta_y, m.shift_y, self.lam_y
            ll, prior = self.ll_y, self.prior_dy
        else:
            delta, shift, lam = s.delta_x, m.shift_x, self.lam_x
            ll, prior = self.ll_x, self.prior_dx
        v = np.log(delta - shift)
        v_new = v + math.exp(self.log_scales[which]) * self.rng.standard_normal(v.shape)
        gap_new = np.exp(v_new)
        ok = gap_new > 0  # reject proposals that underflow the shift gap
        delta_new = shift + gap_new
        if which == "delta_y":
            ll_new = np.where(m.y_mask,
                              _egpd_logpdf_grid(m.y_filled, delta_new, s.xi_y, s.kappa_y), 0.0)
        else:
            ll_new = _egpd_logpdf_grid(m.x, delta_new, s.xi_x, s.kappa_x)
        prior_new = m.delta_prior_grid(lam, delta_new, shift)
        with np.errstate(invalid="ignore"):
            log_ratio = (ll_new - ll) + (prior_new - prior) + (v_new - v)
        log_u = np.log(self.rng.uniform(size=v.shape))
        acc = ok & np.isfinite(log_ratio) & (log_u < log_ratio)
        delta_out = np.where(acc, delta_new, delta)
        if which == "delta_y":
            s.delta_y = delta_out
            self.ll_y = np.where(acc, ll_new, ll)
            self.prior_dy = np.where(acc, prior_new, prior)
        else:
            s.delta_x = delta_out
            self.ll_x = np.where(acc, ll_new, ll)
            self.prior_dx = np.where(acc, prior_new, prior)
        self._adapt(which, acc)

    # -- one sweep --------------------------------------------------------------------

    def sweep(self):
        self._update_beta("beta_y")
        self._update_beta("beta_x")
        self._update_kappa("kappa_y")
        self._update_kappa("kappa_x")
        self._update_xi("xi_y")
        self._update_xi("xi_x")
        self._update_alpha()
        self._update_tau("tau_w")
        self._update_tau("tau_z")
        self._update_w()
        self._update_z()
        self._update_delta("delta_y")
        self._update_delta("delta_x")
        self.iteration += 1

    def set_state(self, state: ModelState):
        self.state = state.copy()
        self.refresh_cache()

    def acceptance_rates(self) -> dict:
        return {k: (self.accept_counts[k] / self.proposal_counts[k]
                    if self.proposal_counts[k] else float("nan"))
                for k in self.accept_counts}


def run_chain(model: HierarchicalModel, cfg: McmcConfig, rng,
              init: ModelState | None = None, chain_index: int = 0) -> PosteriorDraws:
    """Run one chain and return the thinned post-burn-in draws."""
    state = model.initialize_state() if init is None else init
    sampler = MwgSampler(model, state, rng, target_accept=cfg.target_accept)
    sampler.adapting = cfg.adapt
    kept, logpost = [], []
    if cfg.iterations == 0:
        kept.append(sampler.state.copy())
        logpost.append(sampler.log_posterior())
    for it in range(cfg.iterations):
        if it == cfg.burn_in:
            sampler.adapting = False
            # acceptance statistics restart post burn-in
            for k in sampler.accept_counts:
                sampler.accept_counts[k] = 0.0
                sampler.proposal_counts[k] = 0.0
        sampler.sweep()
        logpost.append(sampler.log_posterior())
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thinning == 0:
            kept.append(sampler.state.copy())
    return PosteriorDraws.from_states(
        kept, chain_index=chain_index, log_posterior=np.asarray(logpost),
        acceptance=sampler.acceptance_rates(),
        shift_y=model.shift_y, shift_x=model.shift_x)


def run_mcmc(model: HierarchicalModel, cfg: McmcConfig) -> PosteriorDraws:
    """Run cfg.chains independent chains (split RNG streams) and merge draws."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    parts = [run_chain(model, cfg, np.random.default_rng(ss), chain_index=c)
             for c, ss in enumerate(seeds)]
    return PosteriorDraws.merge(parts)
