import json
from types import SimpleNamespace

import numpy as np
import pytest

from spdemle.experiments import (ExperimentPlan, MCResult, ReplicationRecord,
                                 gamma_identification, max_quantile_gap, qq_data,
                                 rates_table, replication_seed, run_plan, splitmix64)


def _tiny_plan(**kw):
    base = dict(equation="linear", theta=0.01, sigma=0.05, grid_size=100,
                time_steps=400, delta_grid=(0.1,), x0_list=(0.4,), replications=6,
                base_seed=99, mode="single", workers=1)
    base.update(kw)
    return ExperimentPlan(**base)


def test_seed_derivation_is_deterministic_and_collision_free():
    assert splitmix64(0) == splitmix64(0)
    seeds = {replication_seed(2024, rep, d) for rep in range(50) for d in range(5)}
    assert len(seeds) == 250
    assert replication_seed(2024, 3, 1) == replication_seed(2024, 3, 1)


def test_plan_validation():
    with pytest.raises(ValueError):
        _tiny_plan(delta_grid=(0.6,))
    with pytest.raises(ValueError):
        _tiny_plan(x0_list=(1.2,))
    with pytest.raises(ValueError):
        _tiny_plan(replications=0)
    with pytest.raises(ValueError):
        _tiny_plan(equation="pde")
    with pytest.raises(ValueError):
        _tiny_plan(equation="polynomial")
    with pytest.raises(ValueError):
        _tiny_plan(mode="plot")


def test_single_noiseless_replication_recovers_theta():
    plan = _tiny_plan(sigma=0.0, grid_size=500, time_steps=1000, replications=1,
                      delta_grid=(0.05,))
    result = run_plan(plan, quiet=True)
    cell = result.cells()[0]
    assert len(cell.completed) == 1
    assert cell.records[0].theta_hat == pytest.approx(0.01, rel=0.005)


def test_run_plan_deterministic_across_worker_counts(tmp_path):
    outputs = {}
    for workers in (1, 2):
        out = tmp_path / f"w{workers}"
        plan = _tiny_plan(workers=workers, out_dir=str(out), replications=8)
        run_plan(plan, quiet=True)
        outputs[workers] = (out / "estimates.csv").read_bytes()
    assert outputs[1] == outputs[2]


def test_exclusion_accounting_and_failure_threshold():
    # an explosive reaction makes every replication blow up -> run fails loudly
    plan = _tiny_plan(equation="polynomial", poly_coefficients=(0.0, 0.0, 0.0, 40.0),
                      sigma=0.2, time_steps=2000, initial_condition="plateau",
                      grid_size=60)
    with pytest.raises(RuntimeError, match="excluded"):
        with pytest.warns(UserWarning, match="dissipative"):
            run_plan(plan, quiet=True)


def test_mcresult_accounting():
    records = [ReplicationRecord(delta=0.1, x0=0.4, replication=i, seed=i,
                                 theta_hat=0.01 + 0.001 * i, ci_low=0.0, ci_high=1.0)
               for i in range(4)]
    records.append(ReplicationRecord(delta=0.1, x0=0.4, replication=4, seed=4,
                                     excluded=True, exclude_reason="blow up"))
    cell = MCResult(delta=0.1, x0=0.4, clamped=False, records=records, theta=0.01,
                    theta_sigma=1.0, alpha=0.05)
    assert len(cell.completed) + cell.n_excluded == 5
    assert cell.rmse == pytest.approx(np.sqrt(np.mean((np.arange(4) * 0.001) ** 2)))
    assert cell.coverage == 1.0


def test_rates_table_exact_power_law():
    cells = [SimpleNamespace(delta=d, x0=0.4, rmse=0.37 * d) for d in (0.05, 0.1, 0.2)]
    fits = rates_table(cells)
    assert fits[0.4]["slope"] == pytest.approx(1.0, abs=1e-12)
    assert fits[0.4]["residual"] < 1e-12


def test_rates_table_degenerate_and_short():
    flat = [SimpleNamespace(delta=d, x0=0.4, rmse=1.0) for d in (0.05, 0.1, 0.2)]
    with pytest.raises(ValueError, match="degenerate"):
        rates_table(flat)
    with pytest.raises(ValueError, match="3 delta"):
        rates_table(flat[:2])


def test_qq_data_against_seeded_normal():
    # calibration run with a known-normal generator; the gap statistic keeps
    # only the central-98% plotting positions, where its sampling noise at
    # n = 1000 makes the 0.15 threshold meaningful
    samples = np.random.default_rng(3).standard_normal(1000)
    sample_q, theory_q = qq_data(samples)
    assert sample_q.shape == theory_q.shape == (1000,)
    assert np.all(np.diff(sample_q) >= 0)
    assert max_quantile_gap(samples) < 0.15


def test_qq_data_rejects_bad_input(rng):
    with pytest.raises(ValueError, match="100"):
        qq_data(rng.standard_normal(50))
    with pytest.raises(ValueError, match="degenerate"):
        qq_data(np.ones(200))


def test_clamped_cell_recorded_and_optionally_excluded(tmp_path):
    plan = _tiny_plan(x0_list=(0.02,), replications=2)
    result = run_plan(plan, quiet=True)
    assert result.manifest["clamped_cells"] == [[0.1, 0.02]]
    plan2 = _tiny_plan(x0_list=(0.02, 0.4), replications=2, exclude_clamped=True)
    result2 = run_plan(plan2, quiet=True)
    assert result2.manifest["skipped_clamped_cells"] == [(0.1, 0.02)]
    assert list(result2.results) == [(0.1, 0.4)]


def test_runtime_estimate_printed(capsys):
    run_plan(_tiny_plan(replications=3))
    out = capsys.readouterr().out
    assert "estimated" in out and "replications" in out


def test_output_files_and_schemas(tmp_path):
    plan = _tiny_plan(mode="coverage", out_dir=str(tmp_path / "cov"), replications=4)
    result = run_plan(plan, quiet=True)
    estimates = (tmp_path / "cov" / "estimates.csv").read_text().splitlines()
    assert estimates[0].split(",")[:6] == ["equation", "delta", "x0", "replication",
                                           "seed", "theta_hat"]
    assert len(estimates) == 1 + 4
    coverage = (tmp_path / "cov" / "coverage.csv").read_text().splitlines()
    assert coverage[0].startswith("equation,delta,x0,alpha")
    manifest = json.loads((tmp_path / "cov" / "manifest.json").read_text())
    assert manifest["requested"] == 4
    assert manifest["completed"] + manifest["excluded"] == 4
    assert "wall_clock_seconds" in manifest


def test_qq_mode_writes_quantile_pairs(tmp_path):
    plan = _tiny_plan(mode="qq", out_dir=str(tmp_path / "qq"), replications=120,
                      grid_size=64, time_steps=100)
    run_plan(plan, quiet=True)
    lines = (tmp_path / "qq" / "qq.csv").read_text().splitlines()
    assert lines[0] == "equation,delta,x0,rank,sample_quantile,normal_quantile"
    assert len(lines) == 1 + 120


def test_gamma_identification_requires_three_deltas():
    with pytest.raises(ValueError):
        gamma_identification(_tiny_plan(delta_grid=(0.05, 0.1)))
