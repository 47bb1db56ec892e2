"""End-to-end tests for the command handlers."""

import numpy as np
import pytest

from htgnn_ltv.config import RESOLVED_CONFIG_NAME, RunConfig, load_config, write_resolved_config
from htgnn_ltv.data.dataset_io import read_dataset, read_header
from htgnn_ltv.data.synth import DEFAULT_SEGMENTS, sample_population
from htgnn_ltv.evaluation.reports import summarize_sweep
from htgnn_ltv.handlers import ablation_handlers, eval_handlers, gen_handlers, gradcheck_handlers, train_handlers
from htgnn_ltv.handlers.ablation_handlers import ABLATION_VARIANTS, LOSS_VARIANTS, run_sweep
from htgnn_ltv.handlers.gradcheck_handlers import parameter_group, sample_coordinates
from htgnn_ltv.runner import ExperimentRunner
from htgnn_ltv.utils.exceptions import CheckpointError, ConfigurationError
from htgnn_ltv.utils.jsonl import read_jsonl


@pytest.fixture
def config_path(tiny_config, tmp_path):
    return write_resolved_config(tiny_config, tmp_path / "config")


@pytest.fixture
def dataset(config_path, tmp_path):
    out = tmp_path / "data" / "users.jsonl"
    payload = gen_handlers.generate({"n": 160, "segments": 4, "seed": 11, "out": str(out), "config": str(config_path)})
    return out, payload


class TestGenerate:
    def test_writes_dataset(self, dataset, tiny_config):
        out, payload = dataset
        assert payload["users"] == 160
        assert payload["seed"] == 11
        assert 0.0 <= payload["zero_fraction"] <= 1.0
        records = read_dataset(out)
        assert len(records) == 160
        header = read_header(out)
        assert header["seed"] == 11
        assert load_config(out.parent / RESOLVED_CONFIG_NAME).seed == 11
        assert load_config(out.parent / RESOLVED_CONFIG_NAME).embed_dim == tiny_config.embed_dim

    def test_default_segment_count(self, config_path, tmp_path):
        payload = gen_handlers.generate({"n": 60, "seed": 3, "out": str(tmp_path / "u.jsonl"), "config": str(config_path)})
        assert payload["segments"] == 20
        assert payload["users"] == 60

    def test_same_seed_same_file(self, config_path, tmp_path):
        first, second = tmp_path / "a" / "u.jsonl", tmp_path / "b" / "u.jsonl"
        for out in (first, second):
            gen_handlers.generate({"n": 50, "segments": 3, "seed": 2, "out": str(out), "config": str(config_path)})
        assert first.read_bytes() == second.read_bytes()


class TestTrainAndEvaluate:
    @pytest.fixture
    def trained(self, dataset, config_path, tmp_path):
        out, _ = dataset
        run = tmp_path / "run"
        payload = train_handlers.train({"config": str(config_path), "data": str(out), "out": str(run), "epochs": 2})
        return out, run, payload

    def test_train_payload(self, trained):
        _, run, payload = trained
        assert payload["train_users"] + payload["validation_users"] + payload["test_users"] == 160
        assert payload["steps"] > 0
        assert np.isfinite(payload["final_loss"])
        assert len(read_jsonl(payload["train_log"])) == payload["steps"]
        assert (run / RESOLVED_CONFIG_NAME).exists()
        assert load_config(run / RESOLVED_CONFIG_NAME).epochs == 2

    def test_evaluate_test_split(self, trained):
        data, run, train_payload = trained
        payload = eval_handlers.evaluate({"checkpoint": str(run / "final.ckpt"), "data": str(data)})
        assert payload["users"] == train_payload["test_users"]
        assert payload["split"] == "test"
        assert len(read_jsonl(payload["report"])) > 0
        for row in payload["tasks"]:
            if not row["skipped"] and row["nrmse"] is not None:
                assert np.isfinite(row["nrmse"])

    def test_evaluate_all_users(self, trained, tmp_path):
        data, run, _ = trained
        report = tmp_path / "all.jsonl"
        payload = eval_handlers.evaluate({"checkpoint": str(run / "best.ckpt"), "data": str(data), "split": "all", "out": str(report), "full": True})
        assert payload["users"] == 160
        assert payload["report"] == str(report)
        assert len(payload["table"].splitlines()) == 2 + len(read_jsonl(report))

    def test_evaluate_is_deterministic(self, trained):
        data, run, _ = trained
        args = {"checkpoint": str(run / "final.ckpt"), "data": str(data)}
        assert eval_handlers.evaluate(args)["tasks"] == eval_handlers.evaluate(args)["tasks"]

    def test_config_mismatch(self, trained, tiny_config, tmp_path):
        data, run, _ = trained
        other = write_resolved_config(tiny_config.replace(expert_dim=4), tmp_path / "other")
        with pytest.raises(CheckpointError):
            eval_handlers.evaluate({"checkpoint": str(run / "final.ckpt"), "data": str(data), "config": str(other)})

    def test_unknown_split(self, trained):
        data, run, _ = trained
        with pytest.raises(ConfigurationError):
            eval_handlers.evaluate({"checkpoint": str(run / "final.ckpt"), "data": str(data), "split": "validation"})

    def test_runner_round_trip(self, dataset, config_path, tmp_path):
        data, _ = dataset
        runner = ExperimentRunner()
        trained = runner.run_command("train", {"config": str(config_path), "data": str(data), "out": str(tmp_path / "r"), "seed": None, "epochs": None})
        assert trained.exit_code == 0
        evaluated = runner.run_command("eval", {"checkpoint": trained.payload["checkpoint"], "data": str(data), "split": "test", "full": False})
        assert evaluated.exit_code == 0
        assert evaluated.table is not None
        assert "table" not in evaluated.payload


class TestSweeps:
    def test_identical_variants_give_identical_rows(self, dataset, tiny_config):
        data, _ = dataset
        runs = run_sweep(tiny_config, read_dataset(data), {"first": {}, "second": {}}, seeds=2)
        assert runs["first"] == runs["second"]

    def test_loss_mode_sweep(self, dataset, config_path, tmp_path):
        data, _ = dataset
        out = tmp_path / "sweep"
        payload = ablation_handlers.ablate({"config": str(config_path), "data": str(data), "seeds": 1, "loss_modes": True, "out": str(out)})
        assert payload["sweep"] == "loss_modes"
        assert [row["variant"] for row in payload["rows"]] == ["multi", "huber", "mse"]
        assert "ltv30.nrmse.wins" in payload["rows"][1]
        log = read_jsonl(out / "sweep.jsonl")
        assert [entry["variant"] for entry in log] == ["multi", "huber", "mse"]
        assert (out / RESOLVED_CONFIG_NAME).exists()

    @pytest.mark.slow
    def test_ablation_sweep(self, dataset, config_path):
        data, _ = dataset
        payload = ablation_handlers.ablate({"config": str(config_path), "data": str(data), "seeds": 1})
        assert [row["variant"] for row in payload["rows"]] == ["HT-GNN", "w/o HG", "w/o DW", "w/o DT"]
        assert "HT-GNN" in payload["table"]


@pytest.fixture(scope="module")
def desk_population():
    """20k users over the default segment count."""
    return sample_population(20000, DEFAULT_SEGMENTS, seed=1)


@pytest.mark.slow
class TestSweepDirections:
    """Five-seed sweeps at desk scale with the default 20-epoch configuration."""

    def test_full_model_beats_each_ablation(self, desk_population):
        runs = run_sweep(RunConfig(seed=1), desk_population, ABLATION_VARIANTS, seeds=5)
        rows = {row["variant"]: row for row in summarize_sweep(runs, baseline="HT-GNN")}
        for variant in ("w/o HG", "w/o DW", "w/o DT"):
            for key in ("lt30.nrmse", "ltv30.nrmse"):
                assert rows[variant][f"{key}.wins"] >= 3, f"{variant} {key}: {rows[variant][f'{key}.wins']}/5"

    def test_multi_loss_beats_single_losses(self, desk_population):
        runs = run_sweep(RunConfig(seed=1), desk_population, LOSS_VARIANTS, seeds=5)
        rows = {row["variant"]: row for row in summarize_sweep(runs, baseline="multi")}
        for variant in ("huber", "mse"):
            assert rows[variant]["ltv30.nrmse.wins"] >= 3, f"{variant}: {rows[variant]['ltv30.nrmse.wins']}/5"


class TestGradcheck:
    def test_parameter_group(self):
        assert parameter_group("moe.layer0.task.lt30.expert1.w") == "moe"
        assert parameter_group("tower.ltv30.regression.wd") == "tower"

    def test_every_tensor_sampled(self, rng):
        from htgnn_ltv.core.params import ParameterStore

        store = ParameterStore(rng)
        store.create("a.w", (3, 4))
        store.create("b.w", (2,))
        coordinates = sample_coordinates(store.parameters(), 10, rng)
        assert len(coordinates) == 10
        assert {id(p) for p, _ in coordinates[:2]} == {id(p) for p in store.parameters()}

    def test_passes_on_small_model(self, config_path):
        payload = gradcheck_handlers.gradcheck({"config": str(config_path), "coordinates": 120})
        assert payload["passed"] is True
        assert payload["model"]["pass_fraction"] >= 0.95
