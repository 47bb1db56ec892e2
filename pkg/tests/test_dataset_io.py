"""Tests for dataset files."""

import hashlib
import json

import pytest

from htgnn_ltv.data.dataset_io import read_dataset, read_header, write_dataset
from htgnn_ltv.data.synth import sample_population
from htgnn_ltv.utils.exceptions import DataError, DatasetParseError

from .test_records import make_record


def _lines(path) -> list[str]:
    return path.read_text(encoding="utf-8").splitlines()


class TestWriteRead:
    def test_empty_dataset_has_only_a_header(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        write_dataset([], path, seed=3)
        assert len(_lines(path)) == 1
        assert read_header(path)["seed"] == 3
        assert read_dataset(path) == []

    def test_single_record_round_trip(self, tmp_path):
        path = tmp_path / "one.jsonl"
        record = make_record(obs_days=200)
        write_dataset([record], path)
        assert read_dataset(path) == [record]

    def test_generated_round_trip_and_stable_bytes(self, tmp_path):
        records = sample_population(10_000, 20, seed=5)
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_dataset(records, first, seed=5)
        write_dataset(sample_population(10_000, 20, seed=5), second, seed=5)
        assert read_dataset(first) == records
        assert hashlib.sha256(first.read_bytes()).hexdigest() == hashlib.sha256(second.read_bytes()).hexdigest()

    def test_header_carries_digest(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_dataset([make_record()], path, seed=1, config_digest="f" * 64)
        assert read_header(path) == {"version": 1, "seed": 1, "config_digest": "f" * 64}

    def test_invalid_record_is_not_written(self, tmp_path):
        with pytest.raises(DataError):
            write_dataset([make_record(ltv30=-2.0)], tmp_path / "bad.jsonl")


class TestReadErrors:
    def _write(self, tmp_path, lines: list[str]):
        path = tmp_path / "data.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def _valid_line(self, **overrides) -> str:
        from htgnn_ltv.data.dataset_io import record_to_dict

        return json.dumps(record_to_dict(make_record(**overrides)))

    def test_bad_header(self, tmp_path):
        path = self._write(tmp_path, ["not json"])
        with pytest.raises(DatasetParseError) as info:
            read_dataset(path)
        assert info.value.line_number == 1

    def test_unsupported_version(self, tmp_path):
        path = self._write(tmp_path, [json.dumps({"version": 99})])
        with pytest.raises(DatasetParseError):
            read_header(path)

    def test_malformed_json_reports_line(self, tmp_path):
        path = self._write(tmp_path, [json.dumps({"version": 1}), self._valid_line(), "{broken"])
        with pytest.raises(DatasetParseError) as info:
            read_dataset(path)
        assert info.value.line_number == 3

    def test_missing_key_reports_line(self, tmp_path):
        path = self._write(tmp_path, [json.dumps({"version": 1}), json.dumps({"user_id": 1})])
        with pytest.raises(DatasetParseError) as info:
            read_dataset(path)
        assert info.value.line_number == 2

    def test_invariant_violation_names_field(self, tmp_path):
        path = self._write(tmp_path, [json.dumps({"version": 1}), self._valid_line(lt30=40.0)])
        with pytest.raises(DataError) as info:
            read_dataset(path)
        assert info.value.field == "labels.lt30"
        assert "line 2" in str(info.value)
