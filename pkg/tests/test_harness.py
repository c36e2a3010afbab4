"""Config parsing, experiment drivers, CSV artifacts, and the CLI front end."""

from dataclasses import replace

import numpy as np
import pytest

from aggfw.engine import StepSchedule, run
from aggfw.graphs import (
    GraphSchedule,
    Topology,
    lazy_metropolis_weights,
    random_schedule,
    save_schedule,
)
from aggfw.harness.cli import main
from aggfw.harness.config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    build_problem,
    build_schedule,
    build_steps,
    config_hash,
    parse_config,
    parse_config_file,
    problem_hash,
    serialize_config,
)
from aggfw.harness.experiments import (
    audit_experiment,
    audit_trace,
    bench_experiment,
    read_trace_csv,
    run_experiment,
    scaling_study,
    stepsize_study,
    write_trace_csv,
)
from aggfw.problems import initial_points


SMALL = replace(
    ExperimentConfig(),
    problem_dim=4,
    run_rounds=40,
    run_record_every=4,
    seeds_graph=35,
)


# ---------------------------------------------------------------- config


def test_config_serialize_parse_round_trip():
    cfg = ExperimentConfig()
    assert parse_config(serialize_config(cfg)) == cfg
    assert config_hash(parse_config(serialize_config(cfg))) == config_hash(cfg)


def test_config_parse_accepts_comments_and_blanks():
    cfg = parse_config(
        "# a comment\n\nproblem.dim = 8\n  run.rounds = 12  \nproblem.chi = 1,2,3,4,5\n"
    )
    assert cfg.problem_dim == 8
    assert cfg.run_rounds == 12
    assert cfg.problem_chi == (1.0, 2.0, 3.0, 4.0, 5.0)


def test_config_parse_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match=r"<config>:3: unknown key 'problem\.mass'"):
        parse_config("# ok\nproblem.dim = 4\nproblem.mass = 2\n")
    with pytest.raises(ConfigError, match=r":2: duplicate key 'run\.rounds'"):
        parse_config("run.rounds = 5\nrun.rounds = 6\n")
    with pytest.raises(ConfigError, match=r":1: expected 'key = value'"):
        parse_config("just words\n")
    with pytest.raises(ConfigError, match=r":1: bad value for 'run\.rounds'"):
        parse_config("run.rounds = soon\n")


def test_config_validation_messages():
    with pytest.raises(ConfigError, match=r"'steps\.offset'"):
        parse_config("steps.offset = 0\n")
    with pytest.raises(ConfigError, match=r"'run\.x0'"):
        parse_config("run.x0 = corner\n")
    with pytest.raises(ConfigError, match=r"'study\.trials'"):
        parse_config("study.trials = 5\n")


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "exp.txt"
    path.write_text(serialize_config(SMALL), encoding="utf-8")
    assert parse_config_file(path) == SMALL
    with pytest.raises(ConfigError, match="cannot read config"):
        parse_config_file(tmp_path / "absent.txt")


def test_config_hash_separates_problem_from_run():
    cfg = ExperimentConfig()
    more_rounds = replace(cfg, run_rounds=9999)
    assert config_hash(more_rounds) != config_hash(cfg)
    assert problem_hash(more_rounds) == problem_hash(cfg)
    bigger = replace(cfg, problem_dim=32)
    assert problem_hash(bigger) != problem_hash(cfg)


def test_config_overrides():
    cfg = apply_overrides(ExperimentConfig(), ["run.rounds=77", "problem.dim=2"])
    assert cfg.run_rounds == 77 and cfg.problem_dim == 2
    with pytest.raises(ConfigError, match="unknown key"):
        apply_overrides(cfg, ["run.speed=9"])
    with pytest.raises(ConfigError, match="key=value"):
        apply_overrides(cfg, ["run.rounds"])
    with pytest.raises(ConfigError, match="bad value"):
        apply_overrides(cfg, ["run.rounds=many"])
    with pytest.raises(ConfigError, match=r"'run\.rounds'"):
        apply_overrides(cfg, ["run.rounds=0"])


def test_build_problem_broadcasts_singletons():
    cfg = replace(
        ExperimentConfig(),
        problem_n_agents=3,
        problem_chi=(2.0,),
        problem_radii=(4.0,),
    )
    p = build_problem(cfg)
    assert p.n_agents == 3
    assert all(s.radius == 4.0 for s in p.sets)
    with pytest.raises(ConfigError, match="want 1 or 3"):
        build_problem(replace(cfg, problem_chi=(1.0, 2.0)))


def test_build_schedule_from_file(tmp_path):
    path = tmp_path / "sched.txt"
    save_schedule(random_schedule(5, seed=35), path)
    cfg = replace(ExperimentConfig(), graph_schedule_file=str(path))
    assert build_schedule(cfg).n_agents == 5
    three = replace(
        cfg, problem_n_agents=3, problem_chi=(1.0,), problem_radii=(2.0,)
    )
    with pytest.raises(ConfigError, match="5 agents, config has 3"):
        build_schedule(three)
    with pytest.raises(ConfigError, match=r"graph\.schedule_file"):
        build_schedule(replace(cfg, graph_schedule_file=str(tmp_path / "nope.txt")))


def test_build_steps_mirrors_config():
    steps = build_steps(replace(ExperimentConfig(), steps_rule="constant", steps_constant=0.25))
    assert steps.rule == "constant" and steps.gamma(3) == 0.25


# ---------------------------------------------------------------- trace CSV


def test_trace_csv_round_trip(tmp_path):
    problem = build_problem(SMALL)
    trace = run(
        problem,
        build_schedule(SMALL),
        build_steps(SMALL),
        initial_points(problem, mode="zeros", seed=0),
        n_rounds=30,
        record_every=3,
    )
    path = write_trace_csv(tmp_path / "t.csv", trace, "f" * 64)
    data = read_trace_csv(path)
    assert data["config_hash"] == "f" * 64
    assert np.array_equal(data["k"], trace.ks)
    # %.17g wide enough that floats survive the text round trip bitwise
    assert np.array_equal(data["f"], trace.f)
    assert np.array_equal(data["fw_gap"], trace.fw_gap)
    assert np.array_equal(data["C_k"], trace.c_k)


def test_trace_csv_read_rejects_damage(tmp_path):
    good = tmp_path / "g.csv"
    problem = build_problem(SMALL)
    trace = run(
        problem,
        build_schedule(SMALL),
        build_steps(SMALL),
        initial_points(problem, mode="zeros", seed=0),
        n_rounds=4,
        record_every=2,
    )
    write_trace_csv(good, trace, "a" * 64)
    text = good.read_text(encoding="utf-8")

    bad_header = tmp_path / "h.csv"
    bad_header.write_text("k,f\n" + text.partition("\n")[2], encoding="utf-8")
    with pytest.raises(ValueError, match="bad header"):
        read_trace_csv(bad_header)

    no_footer = tmp_path / "nf.csv"
    no_footer.write_text(text.rsplit("\n", 2)[0] + "\n", encoding="utf-8")
    with pytest.raises(ValueError, match="config_hash footer"):
        read_trace_csv(no_footer)

    torn = tmp_path / "torn.csv"
    lines = text.splitlines()
    lines[1] = "1,2,3"
    torn.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(ValueError, match="malformed row"):
        read_trace_csv(torn)


# ---------------------------------------------------------------- drivers


def test_run_experiment_artifacts(tmp_path):
    result = run_experiment(SMALL, out_dir=tmp_path, plot=True)
    assert (tmp_path / "trace.csv").exists()
    assert (tmp_path / "config.txt").exists()
    assert result.plot_path is not None and result.plot_path.exists()
    summary = (tmp_path / "summary.txt").read_text(encoding="utf-8")
    assert summary.rstrip().endswith(f"# config_hash={result.config_hash}")
    assert f"f_star = {result.f_star:.17g}" in summary
    assert result.rel_err == abs(result.f_final - result.f_star) / (1.0 + abs(result.f_star))
    # the oracle artifact is cached; a second run reuses it bitwise
    again = run_experiment(SMALL, out_dir=tmp_path, plot=False)
    assert again.f_star == result.f_star
    assert (tmp_path / "cache").glob("oracle_*.txt")


def test_stepsize_study_aligned_csv(tmp_path):
    cfg = replace(SMALL, run_rounds=30, run_record_every=5)
    result = stepsize_study(cfg, rules=("inv_k", "inv_k_sq"), out_dir=tmp_path, plot=False)
    lines = result.csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "k,f_inv_k,f_inv_k_sq"
    assert lines[-1] == f"# config_hash={result.config_hash}"
    assert len(lines) == 2 + len(result.traces["inv_k"].ks)
    assert set(result.final_gaps) == {"inv_k", "inv_k_sq"}
    # same start, same instance: round 0 objective agrees across rules
    assert result.traces["inv_k"].f[0] == result.traces["inv_k_sq"].f[0]


def test_stepsize_study_rejects_bad_rule_lists(tmp_path):
    with pytest.raises(ConfigError, match="at least two"):
        stepsize_study(SMALL, rules=("inv_k",), out_dir=tmp_path, plot=False)
    with pytest.raises(ConfigError, match="unknown step rule"):
        stepsize_study(SMALL, rules=("inv_k", "log_k"), out_dir=tmp_path, plot=False)
    with pytest.raises(ConfigError, match="distinct"):
        stepsize_study(SMALL, rules=("inv_k", "inv_k"), out_dir=tmp_path, plot=False)


def test_scaling_study_rows_and_artifacts(tmp_path):
    cfg = replace(SMALL, run_rounds=25, study_trials=10)
    result = scaling_study(cfg, dims=(2, 4), out_dir=tmp_path, plot=True)
    assert len(result.rows) == 4  # two dims x two algorithms
    assert {(r.algorithm, r.n) for r in result.rows} == {
        ("fw_tracking", 2), ("fw_tracking", 4), ("pga", 2), ("pga", 4),
    }
    for row in result.rows:
        assert row.subproblem_median_ns > 0
        assert row.time_to_target_ns == -1 or row.time_to_target_ns >= 0
    for key, path in result.trace_paths.items():
        assert path.exists(), key
    lines = result.csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("algorithm,n,rel_err")
    assert result.plot_path is not None and result.plot_path.exists()


def test_scaling_study_guards(tmp_path):
    with pytest.raises(ConfigError, match="l1"):
        scaling_study(
            replace(SMALL, problem_set_kind="linf"), dims=(2,), out_dir=tmp_path, plot=False
        )
    with pytest.raises(ConfigError, match="unknown algorithm"):
        scaling_study(SMALL, dims=(2,), algorithms=("sgd",), out_dir=tmp_path, plot=False)
    with pytest.warns(UserWarning, match="power of two"):
        scaling_study(
            replace(SMALL, run_rounds=5, study_trials=10),
            dims=(3,),
            algorithms=("fw_tracking",),
            out_dir=tmp_path,
            plot=False,
        )


def test_audit_trace_passes_on_sound_setup():
    problem = build_problem(SMALL)
    schedule = build_schedule(SMALL)
    x0 = initial_points(problem, mode="zeros", seed=0)
    report = audit_trace(problem, schedule, SMALL, x0, n_rounds=60)
    assert report.passed
    assert len(report.checks) == 3  # decay checks need the long horizon
    assert "PASS" in report.render() and "FAIL" not in report.render()


def test_audit_trace_catches_broken_mixing():
    from aggfw.graphs import MixingMatrix

    problem = build_problem(SMALL)
    top = Topology(5, frozenset({(0, 1), (1, 2), (2, 3), (3, 4)}))
    w = np.eye(5)
    w[0, 0] = 0.7
    w[0, 1] = 0.3  # row-stochastic only; column sums break the mean identity
    broken = GraphSchedule(
        library=((top, MixingMatrix(w, validate=False)),), selector="uniform", seed=0
    )
    x0 = initial_points(problem, mode="zeros", seed=0)
    report = audit_trace(problem, broken, SMALL, x0, n_rounds=20)
    assert not report.passed
    by_name = {c.name: c for c in report.checks}
    bad = by_name["aggregate tracker mean equals true aggregate"]
    assert not bad.passed
    assert bad.first_bad_round is not None and bad.worst > bad.threshold
    assert "FAIL" in report.render()


def test_audit_experiment_writes_artifacts(tmp_path):
    report = audit_experiment(replace(SMALL, run_rounds=50), out_dir=tmp_path)
    assert report.passed
    text = (tmp_path / "audit.txt").read_text(encoding="utf-8")
    assert "audit: PASS" in text and "# config_hash=" in text
    assert (tmp_path / "audit_trace.csv").exists()


def test_audit_experiment_rejects_disconnected_union(tmp_path):
    top = Topology(3, frozenset({(0, 1)}))  # node 2 never talks to anyone
    sched = GraphSchedule(library=((top, lazy_metropolis_weights(top)),))
    path = tmp_path / "island.txt"
    save_schedule(sched, path)
    cfg = replace(
        SMALL,
        problem_n_agents=3,
        problem_chi=(1.0,),
        problem_radii=(2.0,),
        graph_schedule_file=str(path),
    )
    with pytest.raises(ConfigError, match="union_connected=False"):
        audit_experiment(cfg, out_dir=tmp_path)


def test_bench_experiment_csv(tmp_path):
    path = tmp_path / "b.csv"
    result = bench_experiment("lmo_l1", 8, 12, seed=5, out_path=path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "oracle,n,trials,median_ns,p10_ns,p90_ns,seed"
    assert lines[1] == (
        f"lmo_l1,8,12,{result.median_ns},{result.p10_ns},{result.p90_ns},5"
    )
    with pytest.raises(ConfigError, match="unknown oracle"):
        bench_experiment("qp", 8, 12, seed=5)


# ---------------------------------------------------------------- CLI


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "exp.txt"
    path.write_text(serialize_config(SMALL), encoding="utf-8")
    return path


def test_cli_run(config_file, tmp_path, capsys):
    code = main([
        "run", "--config", str(config_file), "--out", str(tmp_path / "o"), "--no-plot",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "config_hash=" in out and "rel_err=" in out
    assert (tmp_path / "o" / "trace.csv").exists()


def test_cli_usage_errors(config_file, capsys):
    assert main(["frobnicate"]) == 1
    assert main(["run"]) == 1  # --config is required
    assert main(["run", "--config", "/nonexistent/exp.txt"]) == 1
    assert main([
        "run", "--config", str(config_file), "--set", "run.rounds=zero", "--no-plot",
    ]) == 1
    assert "config error" in capsys.readouterr().err


def test_cli_audit_pass_and_fail(config_file, tmp_path, capsys):
    assert main([
        "audit", "--config", str(config_file), "--out", str(tmp_path / "a"),
    ]) == 0
    # a large constant step never lets the consensus error decay
    code = main([
        "audit", "--config", str(config_file),
        "--set", "run.rounds=5000",
        "--set", "steps.rule=constant", "--set", "steps.constant=0.99",
        "--out", str(tmp_path / "b"),
    ])
    assert code == 2
    captured = capsys.readouterr()
    assert "audit: FAIL" in captured.out
    assert "invariant audit failed" in captured.err


def test_cli_oracle_failure_exit_code(config_file, tmp_path, capsys):
    code = main([
        "run", "--config", str(config_file),
        "--set", "oracle.max_iter=1",
        "--out", str(tmp_path / "o"), "--no-plot",
    ])
    assert code == 3
    assert "oracle error" in capsys.readouterr().err


def test_cli_stepsize_study(config_file, tmp_path, capsys):
    code = main([
        "stepsize-study", "--config", str(config_file),
        "--set", "run.rounds=30",
        "--rules", "inv_k,inv_k_sq",
        "--out", str(tmp_path / "s"), "--no-plot",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "final_gap[inv_k]=" in out and "gap_ratio[inv_k_sq/inv_k]=" in out
    assert (tmp_path / "s" / "stepsize.csv").exists()
    assert main([
        "stepsize-study", "--config", str(config_file), "--rules", "inv_k",
        "--out", str(tmp_path / "s2"), "--no-plot",
    ]) == 1


def test_cli_scaling_study(config_file, tmp_path, capsys):
    code = main([
        "scaling-study", "--config", str(config_file),
        "--set", "run.rounds=20", "--set", "study.trials=10",
        "--dims", "2,4", "--algorithms", "fw_tracking",
        "--out", str(tmp_path / "sc"), "--no-plot",
    ])
    assert code == 0
    assert (tmp_path / "sc" / "scaling.csv").exists()
    assert main([
        "scaling-study", "--config", str(config_file), "--dims", "two",
        "--out", str(tmp_path / "sc2"), "--no-plot",
    ]) == 1


def test_cli_bench(tmp_path, capsys):
    path = tmp_path / "bench.csv"
    assert main([
        "bench", "--oracle", "lmo_l1", "--n", "8", "--trials", "10",
        "--seed", "1", "--out", str(path),
    ]) == 0
    assert path.exists()
    assert main([
        "bench", "--oracle", "lmo_l1", "--n", "8", "--trials", "10", "--out", "-",
    ]) == 0
    out = capsys.readouterr().out
    assert "lmo_l1,8,10," in out
    assert main(["bench", "--oracle", "lmo_l1", "--n", "8", "--trials", "3", "--out", "-"]) == 1
