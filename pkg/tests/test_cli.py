"""CLI surface: exit codes, determinism, and each subcommand's happy path."""

import json

import pytest

from tailsynth.cli import main
from tailsynth.domain import write_jsonl
from tailsynth.policy import TrainStats
from tailsynth.retrieval import VectorIndex

from conftest import FIXTURE_DIR


def run_cli(*argv):
    return main(list(argv))


class TestExitCodes:
    def test_missing_config_flag_exits_1(self, capsys):
        code = run_cli("synth", "--queries", "q", "--products", "p", "--out", "o")
        assert code == 1
        err = capsys.readouterr().err
        assert "usage" in err or "required" in err

    def test_unknown_flag_exits_1(self, capsys):
        assert run_cli("gradcheck", "--bogus") == 1

    def test_unknown_command_exits_1(self):
        assert run_cli("frobnicate") == 1

    def test_missing_file_exits_1(self, tmp_path, capsys):
        code = run_cli(
            "build-index", "--products", str(tmp_path / "nope.jsonl"), "--out",
            str(tmp_path / "i.npz"),
        )
        assert code == 1
        assert "nope.jsonl" in capsys.readouterr().err

    def test_malformed_config_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "config.json"
        cfg.write_text("{not json")
        code = run_cli(
            "synth", "--config", str(cfg),
            "--queries", str(FIXTURE_DIR / "queries.jsonl"),
            "--products", str(FIXTURE_DIR / "products.jsonl"),
            "--out", str(tmp_path / "o.jsonl"),
        )
        assert code == 1

    @pytest.mark.parametrize(
        "command",
        ["train-policy", "build-index", "synth", "eval", "gradcheck", "report"],
    )
    def test_help_exits_0(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli(command, "--help")
        assert exc.value.code == 0
        assert "--seed" in capsys.readouterr().out


class TestGradcheck:
    def test_prints_small_error_and_exits_0(self, capsys):
        assert run_cli("gradcheck", "--seed", "7") == 0
        out = capsys.readouterr().out
        assert "max relative error" in out
        value = float(out.strip().rsplit(" ", 1)[-1])
        assert value < 1e-4

    def test_seeded_output_reproducible(self, capsys):
        run_cli("gradcheck", "--seed", "3")
        first = capsys.readouterr().out
        run_cli("gradcheck", "--seed", "3")
        assert capsys.readouterr().out == first


class TestBuildIndex:
    def test_builds_and_persists(self, tmp_path, capsys):
        out = tmp_path / "index.npz"
        code = run_cli(
            "build-index",
            "--products", str(FIXTURE_DIR / "products.jsonl"),
            "--out", str(out),
            "--dim", "128", "--partitions", "4",
        )
        assert code == 0
        index = VectorIndex.load(out)
        assert index.size == 10_000
        assert index.partitions == 4


class TestEvalAndReport:
    def test_eval_writes_report(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = run_cli(
            "eval", "--judgments", str(FIXTURE_DIR / "judgments.jsonl"),
            "--out", str(out), "--n", "5", "--n", "10",
        )
        assert code == 0
        assert "Item Goodrate" in capsys.readouterr().out
        payload = json.loads(out.read_text())
        assert set(payload["query_goodrate_at"]) == {"5", "10"}

    def test_report_renders_metrics_table(self, tmp_path, capsys):
        report = tmp_path / "report.json"
        run_cli("eval", "--judgments", str(FIXTURE_DIR / "judgments.jsonl"), "--out", str(report))
        capsys.readouterr()
        assert run_cli("report", "--metrics", str(report)) == 0
        assert "GSB delta" in capsys.readouterr().out

    def test_report_renders_stage_stats(self, tmp_path, capsys):
        stats = {
            "format_version": 1,
            "stages": {"generate": {"input": 5, "output": 4, "dropped": 1,
                                     "reasons": {"format_too_few": 1}}},
            "counters": {},
        }
        path = tmp_path / "stats.json"
        path.write_text(json.dumps(stats))
        assert run_cli("report", "--stage-stats", str(path)) == 0
        out = capsys.readouterr().out
        assert "generate" in out and "format_too_few=1" in out

    def test_report_renders_training_stats(self, tmp_path, capsys):
        stats = TrainStats()
        for i in range(5):
            stats.append(0.1 * i, 0.0, 0.0, 0.0, 1.0)
        path = tmp_path / "train.csv"
        stats.to_csv(path)
        assert run_cli("report", "--stats", str(path)) == 0
        assert "mean_total" in capsys.readouterr().out

    def test_report_without_inputs_exits_1(self, capsys):
        assert run_cli("report") == 1


class TestTrainPolicyCommand:
    def test_small_training_run(self, tmp_path, capsys):
        queries = [
            {"id": "q1", "text": "wool sweater for winter evenings", "query_type": "qa"},
            {"id": "q2", "text": "camping tent without heavy base", "query_type": "negative"},
        ]
        products = [
            {"id": f"p{i}", "title": t, "attributes": {}}
            for i, t in enumerate(
                ["arvel wool sweater large size", "bylor camping tent for travel",
                 "cormet wool sweater quick dry", "dovira camping tent small size"]
            )
        ]
        qpath, ppath = tmp_path / "q.jsonl", tmp_path / "p.jsonl"
        write_jsonl(qpath, queries)
        write_jsonl(ppath, products)
        policy_path = tmp_path / "policy0.json"
        from tailsynth.policy import CategoricalRewritePolicy

        CategoricalRewritePolicy.uniform(
            ["wool sweater quick dry", "camping tent small size", "zorvex blin"]
        ).save(policy_path)
        out = tmp_path / "trained.json"
        stats_path = tmp_path / "stats.csv"
        code = run_cli(
            "train-policy",
            "--queries", str(qpath), "--products", str(ppath),
            "--policy", str(policy_path), "--out", str(out),
            "--stats", str(stats_path),
            "--iterations", "3", "--k", "2", "--group-size", "4", "--seed", "1",
        )
        assert code == 0
        assert CategoricalRewritePolicy.load(out).m == 3
        loaded = TrainStats.from_csv(stats_path)
        assert len(loaded) == 3

        # identical seeded invocation writes bit-identical artifacts
        out2, stats2 = tmp_path / "trained2.json", tmp_path / "stats2.csv"
        run_cli(
            "train-policy",
            "--queries", str(qpath), "--products", str(ppath),
            "--policy", str(policy_path), "--out", str(out2),
            "--stats", str(stats2),
            "--iterations", "3", "--k", "2", "--group-size", "4", "--seed", "1",
        )
        assert out.read_bytes() == out2.read_bytes()
        assert stats_path.read_bytes() == stats2.read_bytes()


class TestSynthCommand:
    def test_seeded_invocations_bit_identical(self, tmp_path):
        args = [
            "synth",
            "--config", str(FIXTURE_DIR / "config.json"),
            "--queries", str(FIXTURE_DIR / "queries.jsonl"),
            "--products", str(FIXTURE_DIR / "products.jsonl"),
            "--top-k", "10",
        ]
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert run_cli(*args, "--out", str(out1)) == 0
        assert run_cli(*args, "--out", str(out2)) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_prebuilt_index_accepted(self, tmp_path):
        index_path = tmp_path / "index.npz"
        assert run_cli(
            "build-index",
            "--products", str(FIXTURE_DIR / "products.jsonl"),
            "--out", str(index_path),
            "--dim", "512", "--partitions", "64",
        ) == 0
        out = tmp_path / "pairs.jsonl"
        code = run_cli(
            "synth",
            "--config", str(FIXTURE_DIR / "config.json"),
            "--queries", str(FIXTURE_DIR / "queries.jsonl"),
            "--products", str(FIXTURE_DIR / "products.jsonl"),
            "--index", str(index_path),
            "--out", str(out), "--top-k", "10",
        )
        assert code == 0
        assert out.stat().st_size > 0
