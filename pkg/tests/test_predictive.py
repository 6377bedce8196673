"""Unit tests for calibrated fields, posterior summaries, and figure exports."""

import numpy as np
import pytest

from windcal.calibration import conditional_calibrate
from windcal.data import SyntheticTruth, generate_synthetic
from windcal.draws import PosteriorDraws, SCALAR_NAMES
from windcal.egpd import EgpdParams
from windcal.errors import DomainError
from windcal.latent import StationNetwork
from windcal.model import HierarchicalModel, McmcConfig, run_mcmc
from windcal.predictive import (
    SUMMARY_COLUMNS,
    SUMMARY_ROW_ORDER,
    calibrate_field,
    export_figures,
    gaussian_kde_1d,
    summarize_posterior,
)


def small_fit(seed=0, n_total=5, n_obs=3, n_times=4, iterations=30):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 60.0, size=(n_total, 2))
    observed = np.zeros(n_total, dtype=bool)
    observed[:n_obs] = True
    net = StationNetwork.from_coords([f"s{i}" for i in range(n_total)], coords, observed)
    truth = SyntheticTruth(tau_z=4.0, shift_y=2.0, shift_x=2.0)
    panel, _ = generate_synthetic(truth, net, n_times, seed=seed + 50)
    model = HierarchicalModel(panel.y, panel.x, net,
                              shift_y=truth.shift_y, shift_x=truth.shift_x)
    draws = run_mcmc(model, McmcConfig(iterations=iterations, burn_in=10,
                                       thinning=2, seed=seed))
    return net, panel, draws


class TestCalibrateField:
    def test_shapes_and_bounds(self):
        net, panel, draws = small_fit()
        field = calibrate_field(draws, panel.x, net.observed_indices, seed=1)
        assert field.values.shape == panel.x.shape
        assert np.all(field.values >= 0.0)
        assert np.all(field.sd >= 0.0)
        assert np.all((field.clamp_fraction >= 0) & (field.clamp_fraction <= 1))
        assert np.array_equal(field.clamped, field.clamp_fraction > 0)

    def test_single_draw_matches_conditional_map(self):
        net, panel, draws = small_fit()
        one = PosteriorDraws(
            scalars={k: v[:1] for k, v in draws.scalars.items()},
            w=draws.w[:1], z=draws.z[:1],
            delta_y=draws.delta_y[:1], delta_x=draws.delta_x[:1],
            chain=draws.chain[:1], log_posterior=draws.log_posterior[:1],
            acceptance=draws.acceptance,
            shift_y=draws.shift_y, shift_x=draws.shift_x)
        field = calibrate_field(one, panel.x, net.observed_indices, seed=3)
        # observed rows are deterministic given the draw
        r, i = 0, int(net.observed_indices[0])
        px = EgpdParams(float(one.delta_x[0, i, 2]), float(one.scalars["xi_x"][0]),
                        float(one.scalars["kappa_x"][0]))
        py = EgpdParams(float(one.delta_y[0, r, 2]), float(one.scalars["xi_y"][0]),
                        float(one.scalars["kappa_y"][0]))
        expect = conditional_calibrate(panel.x[i, 2], px, py)
        assert field.values[i, 2] == pytest.approx(expect, rel=1e-12)
        assert field.sd[i, 2] == pytest.approx(0.0, abs=1e-9)

    def test_simulator_only_rows_seeded(self):
        net, panel, draws = small_fit()
        a = calibrate_field(draws, panel.x, net.observed_indices, seed=7)
        b = calibrate_field(draws, panel.x, net.observed_indices, seed=7)
        c = calibrate_field(draws, panel.x, net.observed_indices, seed=8)
        assert np.array_equal(a.values, b.values)
        sim_only = np.setdiff1d(np.arange(net.n_total), net.observed_indices)
        assert not np.array_equal(a.values[sim_only], c.values[sim_only])

    def test_empty_draws_rejected(self):
        net, panel, draws = small_fit()
        with pytest.raises(DomainError):
            calibrate_field(draws, panel.x[:, :2], net.observed_indices)


class TestSummaries:
    def test_table_rows_and_columns(self):
        _, _, draws = small_fit()
        table = summarize_posterior(draws)
        assert tuple(table.keys()) == SUMMARY_ROW_ORDER
        for row in table.values():
            assert tuple(row.keys()) == SUMMARY_COLUMNS
            assert row["min"] <= row["q2.5"] <= row["median"] <= row["q97.5"] <= row["max"]
            assert row["sd"] >= 0.0

    def test_against_numpy(self):
        _, _, draws = small_fit()
        table = summarize_posterior(draws)
        v = draws.scalars["alpha"]
        assert table["alpha"]["mean"] == pytest.approx(v.mean())
        assert table["alpha"]["sd"] == pytest.approx(v.std(ddof=1))
        assert table["alpha"]["q2.5"] == pytest.approx(np.quantile(v, 0.025))


class TestKde:
    def test_integrates_to_one(self):
        rng = np.random.default_rng(0)
        sample = rng.normal(10.0, 2.0, 400)
        grid = np.linspace(0.0, 20.0, 2001)
        dens, h = gaussian_kde_1d(sample, grid)
        assert h > 0
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=0.01)

    def test_degenerate_sample_fallback(self):
        dens, h = gaussian_kde_1d([5.0], np.linspace(0, 10, 50))
        assert h == 1.0
        assert np.all(np.isfinite(dens))

    def test_nan_dropped(self):
        dens, _ = gaussian_kde_1d([1.0, np.nan, 2.0], np.linspace(0, 3, 10))
        assert np.all(np.isfinite(dens))

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            gaussian_kde_1d([np.nan], np.linspace(0, 1, 5))


class TestExportFigures:
    def test_bundle_contents(self):
        net, panel, draws = small_fit()
        field = calibrate_field(draws, panel.x, net.observed_indices, seed=1)
        y_full = np.full(panel.x.shape, np.nan)
        y_full[net.observed_indices] = panel.y
        bundle = export_figures(field, y_full, panel.x, draws, net.ids, day=1)
        assert bundle.day == 1
        assert bundle.kde_grid.shape == bundle.kde_calibrated.shape
        assert len(bundle.station_ids) == net.n_total
        assert bundle.sigma_y_box.shape == (panel.n_times, 5)
        # five-number summaries are ordered
        assert np.all(np.diff(bundle.sigma_y_box, axis=1) >= 0)
        assert np.all(np.diff(bundle.sigma_x_box, axis=1) >= 0)

    def test_day_out_of_range(self):
        net, panel, draws = small_fit()
        field = calibrate_field(draws, panel.x, net.observed_indices, seed=1)
        y_full = np.full(panel.x.shape, np.nan)
        y_full[net.observed_indices] = panel.y
        with pytest.raises(DomainError):
            export_figures(field, y_full, panel.x, draws, net.ids, day=99)


class TestDrawsContainer:
    def test_merge_preserves_counts_and_chain_labels(self):
        _, _, a = small_fit(seed=1)
        _, _, b = small_fit(seed=2)
        b.chain[:] = 1
        merged = PosteriorDraws.merge([a, b])
        assert merged.n_draws == a.n_draws + b.n_draws
        assert set(np.unique(merged.chain)) == {0, 1}
        for name in SCALAR_NAMES:
            assert merged.scalars[name].shape == (merged.n_draws,)
