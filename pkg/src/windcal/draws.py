"""Thinned MCMC output: stacked states plus derived per-cell scales."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SCALAR_NAMES = ("beta_y", "beta_x", "kappa_y", "kappa_x",
                "xi_y", "xi_x", "alpha", "tau_w", "tau_z")


@dataclass
class PosteriorDraws:
    """Posterior sample storage; arrays are indexed draw-first."""

    scalars: dict                 # name -> (n_draws,)
    w: np.ndarray                 # (n_draws, N_s)
    z: np.ndarray                 # (n_draws, T)
    delta_y: np.ndarray           # (n_draws, N, T)
    delta_x: np.ndarray           # (n_draws, N_s, T)
    chain: np.ndarray             # (n_draws,)
    log_posterior: np.ndarray     # per-iteration trace (concatenated over chains)
    acceptance: dict              # block -> post-burn-in acceptance rate
    shift_y: float
    shift_x: float

    @classmethod
    def from_states(cls, states, chain_index, log_posterior, acceptance,
                    shift_y, shift_x) -> "PosteriorDraws":
        if not states:
            raise DomainError("no retained draws")
        scalars = {name: np.array([getattr(s, name) for s in states])
                   for name in SCALAR_NAMES}
        return cls(
            scalars=scalars,
            w=np.stack([s.w for s in states]),
            z=np.stack([s.z for s in states]),
            delta_y=np.stack([s.delta_y for s in states]),
            delta_x=np.stack([s.delta_x for s in states]),
            chain=np.full(len(states), chain_index, dtype=int),
            log_posterior=np.asarray(log_posterior),
            acceptance=dict(acceptance),
            shift_y=shift_y,
            shift_x=shift_x,
        )

    @classmethod
    def merge(cls, parts) -> "PosteriorDraws":
        if not parts:
            raise DomainError("nothing to merge")
        first = parts[0]
        return cls(
            scalars={k: np.concatenate([p.scalars[k] for p in parts]) for k in first.scalars},
            w=np.concatenate([p.w for p in parts]),
            z=np.concatenate([p.z for p in parts]),
            delta_y=np.concatenate([p.delta_y for p in parts]),
            delta_x=np.concatenate([p.delta_x for p in parts]),
            chain=np.concatenate([p.chain for p in parts]),
            log_posterior=np.concatenate([p.log_posterior for p in parts]),
            acceptance={k: float(np.mean([p.acceptance[k] for p in parts]))
                        for k in first.acceptance},
            shift_y=first.shift_y,
            shift_x=first.shift_x,
        )

    @property
    def n_draws(self) -> int:
        return self.w.shape[0]

    def sigma_y(self) -> np.ndarray:
        """Per-draw implied scales -xi_y * delta_y(i, j); shape (n_draws, N, T)."""
        return -self.scalars["xi_y"][:, None, None] * self.delta_y

    def sigma_x(self) -> np.ndarray:
        return -self.scalars["xi_x"][:, None, None] * self.delta_x
