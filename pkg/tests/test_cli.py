"""CLI subcommands: smoke runs, exit codes, manifests."""

import json

from rbcnet.cli import EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION, main


def run(argv):
    return main(argv)


class TestGenAndValidate:
    def test_gen_then_validate(self, tmp_path, capsys):
        data = tmp_path / "games.jsonl"
        assert run(["gen-data", "--out", str(data), "--games", "6", "--seed", "3",
                    "--turn-cap", "20"]) == EXIT_OK
        assert data.exists()
        assert run(["validate-data", "--data", str(data)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "6/6 records valid" in out

    def test_validate_rejects_tampered(self, tmp_path, capsys):
        data = tmp_path / "games.jsonl"
        run(["gen-data", "--out", str(data), "--games", "2", "--seed", "3",
             "--turn-cap", "10"])
        lines = data.read_text().splitlines()
        lines[0] = lines[0].replace('"was_illegal":false', '"was_illegal":true', 1)
        data.write_text("\n".join(lines) + "\n")
        assert run(["validate-data", "--data", str(data)]) == EXIT_VALIDATION

    def test_missing_data_flag_is_config_error(self):
        assert run(["validate-data"]) == EXIT_CONFIG


class TestTraining:
    def test_train_sl_smoke_and_manifest(self, tmp_path, capsys):
        data = tmp_path / "games.jsonl"
        run(["gen-data", "--out", str(data), "--games", "4", "--seed", "5",
             "--turn-cap", "10"])
        out_dir = tmp_path / "sl"
        code = run(["train-sl", "--data", str(data), "--out", str(out_dir),
                    "--epochs", "1", "--batch-size", "64", "--net-preset", "tiny",
                    "--seed", "1"])
        assert code == EXIT_OK
        assert (out_dir / "sl.ckpt").exists()
        assert (out_dir / "metrics.json").exists()
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["command"] == "train-sl"
        assert manifest["config"]["epochs"] == 1
        assert "code_version" in manifest

    def test_train_rl_requires_sl_checkpoint(self, capsys):
        assert run(["train-rl"]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "sl-checkpoint" in err

    def test_train_rl_smoke(self, tmp_path):
        data = tmp_path / "games.jsonl"
        run(["gen-data", "--out", str(data), "--games", "4", "--seed", "5",
             "--turn-cap", "8"])
        sl_dir = tmp_path / "sl"
        run(["train-sl", "--data", str(data), "--out", str(sl_dir),
             "--epochs", "1", "--net-preset", "tiny", "--seed", "1"])
        rl_dir = tmp_path / "rl"
        code = run(["train-rl", "--sl-checkpoint", str(sl_dir / "sl.ckpt"),
                    "--out", str(rl_dir), "--games-per-iter", "2",
                    "--max-iterations", "1", "--turn-cap", "4",
                    "--update-epochs", "1", "--minibatch-size", "32",
                    "--max-parallel", "2", "--seed", "2"])
        assert code == EXIT_OK
        assert (rl_dir / "final.ckpt").exists()
        assert (rl_dir / "metrics.jsonl").exists()


class TestArenaAndGradcheck:
    def test_arena_writes_report(self, tmp_path, capsys):
        report = tmp_path / "report.json"
        code = run(["arena", "--a", "random", "--b", "random", "--games", "4",
                    "--seed", "2", "--turn-cap", "20", "--out", str(report)])
        assert code == EXIT_OK
        data = json.loads(report.read_text())
        assert data["games"] == 4
        assert "score" in data

    def test_bad_bot_spec_is_config_error(self):
        assert run(["arena", "--a", "stockfish", "--b", "random",
                    "--games", "2", "--seed", "1"]) == EXIT_CONFIG

    def test_gradcheck_passes_on_tiny_config(self, capsys):
        code = run(["gradcheck", "--samples-per-param", "8", "--seed", "0"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "max relative error" in out


class TestConfigFile:
    def test_config_section_with_flag_override(self, tmp_path, capsys):
        config = tmp_path / "run.yaml"
        config.write_text(
            "gen_data:\n  games: 3\n  seed: 11\n  turn_cap: 10\n"
            f"  out: {tmp_path / 'from_config.jsonl'}\n")
        assert run(["--config", str(config), "gen-data"]) == EXIT_OK
        assert (tmp_path / "from_config.jsonl").exists()
        assert sum(1 for _ in open(tmp_path / "from_config.jsonl")) == 3
        # Flag wins over the file value.
        other = tmp_path / "override.jsonl"
        assert run(["--config", str(config), "gen-data", "--out", str(other),
                    "--games", "2"]) == EXIT_OK
        assert sum(1 for _ in open(other)) == 2
