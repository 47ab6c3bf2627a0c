import json

from cli import EXIT_INVARIANT, EXIT_OK, EXIT_USAGE, main


def test_profile_exit_ok(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["profile", "-d", "2", "--points", "5", "--out", str(out)]) == EXIT_OK
    assert out.exists()


def test_bad_source_is_usage_error(tmp_path, capsys):
    assert main(["profile", "--sources", "", "--out", str(tmp_path / "p.csv")]) == EXIT_USAGE
    assert "invalid configuration" in capsys.readouterr().err


def test_unsupported_request_is_usage_error(tmp_path, capsys):
    assert main(["profile", "-d", "3", "--sources", "exact", "--out", str(tmp_path / "p.csv")]) == EXIT_USAGE
    assert "profile failed" in capsys.readouterr().err


def test_missing_config_file_is_usage_error(tmp_path):
    assert main(["figure1", "--config", str(tmp_path / "nope.cfg")]) == EXIT_USAGE


def test_verify_prints_summary(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert main(["verify", "--suite", "oracle", "--out", str(out)]) == EXIT_OK
    line = capsys.readouterr().out.strip().splitlines()[-1]
    summary = json.loads(line)
    assert summary["success"] is True
    assert summary["failures"] == 0
    assert summary["summary"] == str(out)


def test_exit_codes_are_distinct():
    assert len({EXIT_OK, EXIT_INVARIANT, EXIT_USAGE}) == 3
