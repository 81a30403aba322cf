import json

import pytest

from rulegame.cli import main


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture()
def small_config(tmp_path):
    return write(
        tmp_path / "exp.cfg",
        "[game]\nL = 6\nKmin = 3\nKmax = 3\nC = 2\n"
        "[agent]\nkind = qlearn\nseedCount = 3\n"
        "[run]\nepisodes = 12\n",
    )


@pytest.fixture()
def ltr_rule(tmp_path):
    return write(tmp_path / "ltr.rule", "order=ltr; bucket=any\n")


class TestValidate:
    def test_valid_rule_exit_zero(self, capsys, ltr_rule):
        assert main(["validate", ltr_rule]) == 0
        out = capsys.readouterr().out
        assert "history class: static" in out

    def test_exhibit_corpus(self, exhibit_rule_files):
        for path in exhibit_rule_files:
            assert main(["validate", str(path)]) == 0

    def test_malformed_exit_two(self, capsys, tmp_path):
        path = write(tmp_path / "bad.rule", "order=")
        assert main(["validate", path]) == 2
        assert "column 7" in capsys.readouterr().err

    def test_out_of_range_guard_exit_two(self, capsys, tmp_path):
        path = write(
            tmp_path / "guard.rule",
            "order=any; bucket=any; when at(9, red) then move=1, bucket=left\n",
        )
        assert main(["validate", path, "--length", "6", "--kmin", "3", "--kmax", "3"]) == 2
        assert "position out of range" in capsys.readouterr().out


class TestCounting:
    def test_rulespace(self, capsys):
        assert main(["rulespace", "20", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == str(2432902008176640000 * 2**60)
        assert lines[1] == "≈2.80e36"

    def test_count(self, capsys):
        assert main(["count", "20", "5", "2"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "496128"
        assert main(["count", "6", "3", "2"]) == 0
        assert capsys.readouterr().out.splitlines()[0] == "160"

    def test_bad_arguments_exit_two(self, capsys):
        assert main(["count", "3", "9", "2"]) == 2


class TestTrain:
    def test_deterministic_csv(self, tmp_path, small_config, ltr_rule, capsys):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["train", "--config", small_config, "--rule", ltr_rule, "--out", str(out1)]) == 0
        assert main(["train", "--config", small_config, "--rule", ltr_rule, "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        lines = out1.read_text().splitlines()
        assert lines[0] == "rule,learner,seed,episode,attempts,errors,reward_sum,discounted_return,cleared"
        assert len(lines) == 1 + 3 * 12  # header + seeds x episodes

    def test_random_on_permissive_rule_zero_errors(self, tmp_path, small_config, capsys):
        rule = write(tmp_path / "any.rule", "order=any; bucket=any\n")
        out = tmp_path / "curves.csv"
        assert (
            main(
                [
                    "train",
                    "--config",
                    small_config,
                    "--rule",
                    rule,
                    "--out",
                    str(out),
                    "--agent",
                    "random",
                ]
            )
            == 0
        )
        rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
        assert all(row[5] == "0" for row in rows)  # errors column

    def test_missing_config_exit_two(self, tmp_path, ltr_rule):
        assert (
            main(
                [
                    "train",
                    "--config",
                    str(tmp_path / "absent.cfg"),
                    "--rule",
                    ltr_rule,
                    "--out",
                    str(tmp_path / "x.csv"),
                ]
            )
            == 2
        )


def planted_difficulty_files(tmp_path, transform=lambda v: v):
    def rows(learner, rule, values):
        return [f"{rule},{learner},{i},{transform(v)!r}" for i, v in enumerate(values, 1)]

    header = "rule,learner,seed,difficulty"
    x_lines = [header] + rows("ml", "A", range(30, 40)) + rows("ml", "B", range(5, 10))
    y_lines = [header] + rows("hl", "A", range(5, 10)) + rows("hl", "B", range(30, 40))
    x = write(tmp_path / "x.csv", "\n".join(x_lines) + "\n")
    y = write(tmp_path / "y.csv", "\n".join(y_lines) + "\n")
    return x, y


class TestPairs:
    def test_planted_crossing(self, tmp_path, capsys):
        x, y = planted_difficulty_files(tmp_path)
        out = tmp_path / "pairs.csv"
        assert main(["pairs", "--x", x, "--y", y, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "ruleA,ruleB,direction,p_axis_x,p_axis_y"
        assert len(lines) == 2
        assert lines[1].startswith("A,B,x,")

    def test_monotone_transform_same_report(self, tmp_path):
        x, y = planted_difficulty_files(tmp_path)
        out1 = tmp_path / "p1.csv"
        main(["pairs", "--x", x, "--y", y, "--out", str(out1)])
        x2, y2 = planted_difficulty_files(tmp_path, transform=lambda v: float(v**3))
        out2 = tmp_path / "p2.csv"
        main(["pairs", "--x", x2, "--y", y2, "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_disjoint_rules_exit_two(self, tmp_path, capsys):
        header = "rule,learner,seed,difficulty"
        x = write(tmp_path / "x.csv", f"{header}\nA,ml,1,1.0\n")
        y = write(tmp_path / "y.csv", f"{header}\nB,hl,1,1.0\n")
        assert main(["pairs", "--x", x, "--y", y, "--out", str(tmp_path / "o.csv")]) == 2

    def test_schema_mismatch_exit_two(self, tmp_path):
        x = write(tmp_path / "x.csv", "foo,bar\n1,2\n")
        y = write(tmp_path / "y.csv", "foo,bar\n1,2\n")
        assert main(["pairs", "--x", x, "--y", y, "--out", str(tmp_path / "o.csv")]) == 2


class TestTransfer:
    def test_reports_a_number(self, tmp_path, small_config, ltr_rule, capsys):
        code = main(
            [
                "transfer",
                "--config",
                small_config,
                "--from",
                ltr_rule,
                "--to",
                ltr_rule,
                "--phase1",
                "0",
                "--phase2",
                "8",
                "--seeds",
                "2",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "transfer index" in out
        assert "0.0" in out  # zero pretraining, paired seeds


class TestReplay:
    def test_recorded_sessions_replay_clean(self, tmp_path, small_config, ltr_rule, capsys):
        record_dir = tmp_path / "sessions"
        main(
            [
                "train",
                "--config",
                small_config,
                "--rule",
                ltr_rule,
                "--out",
                str(tmp_path / "c.csv"),
                "--record",
                str(record_dir),
                "--seeds",
                "2",
                "--episodes",
                "5",
            ]
        )
        files = sorted(record_dir.glob("*.jsonl"))
        assert len(files) == 2
        assert main(["replay", *map(str, files)]) == 0
        assert "0 divergence(s)" in capsys.readouterr().out

    def test_tampered_session_exit_one(self, tmp_path, small_config, ltr_rule, capsys):
        record_dir = tmp_path / "sessions"
        main(
            [
                "train",
                "--config",
                small_config,
                "--rule",
                ltr_rule,
                "--out",
                str(tmp_path / "c.csv"),
                "--record",
                str(record_dir),
                "--seeds",
                "1",
                "--episodes",
                "3",
            ]
        )
        (path,) = record_dir.glob("*.jsonl")
        lines = path.read_text().splitlines()
        target = next(i for i, line in enumerate(lines) if '"accepted":true' in line)
        obj = json.loads(lines[target])
        obj["accepted"], obj["reward"] = False, -1
        lines[target] = json.dumps(obj, separators=(",", ":"))
        path.write_text("\n".join(lines) + "\n")
        assert main(["replay", str(path)]) == 1
        assert "1 divergence(s)" in capsys.readouterr().out


class TestUsability:
    @pytest.mark.parametrize(
        "command",
        ["validate", "train", "pairs", "transfer", "count", "rulespace", "replay", "serve"],
    )
    def test_help_exists(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out

    def test_unknown_flag_exit_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["count", "--bogus", "1", "2", "3"])
        assert exc.value.code == 2

    def test_unknown_subcommand_exit_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
