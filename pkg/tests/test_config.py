import pytest

from src.config import DEFAULTS, load_config, section
from src.errors import ConfigError
from src.parallel import map_chunks, split_range, worker_count


def test_missing_file_gives_defaults(tmp_path):
    cfg = load_config(str(tmp_path / "nope.yaml"))
    assert cfg["bench"]["reps"] == DEFAULTS["bench"]["reps"]
    assert cfg["verify"]["tol_grad"] == 1e-3


def test_yaml_overrides_and_env_expansion(tmp_path, monkeypatch):
    monkeypatch.setenv("FIXTURE_ROOT", "/srv/fx")
    monkeypatch.delenv("LOG_LEVEL", raising=False)
    monkeypatch.delenv("FIXTURE_LEAF", raising=False)
    p = tmp_path / "c.yaml"
    p.write_text(
        "paths:\n  fixtures: ${FIXTURE_ROOT}/${FIXTURE_LEAF:golden}\n"
        "bench:\n  reps: 30\n"
        "module:\n  ln_eps: 1.0e-5\n",
        encoding="utf-8",
    )
    cfg = load_config(str(p))
    assert cfg["paths"]["fixtures"] == "/srv/fx/golden"
    assert set(cfg["paths"]) == {"fixtures"}
    assert cfg["module"]["ln_eps"] == 1e-5
    assert cfg["bench"]["reps"] == 30
    assert cfg["bench"]["warmup"] == 3
    assert cfg["logging"]["level"] == "WARNING"


def test_bad_yaml_raises(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("bench: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(p))
    p.write_text("- just\n- a list\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_section_requires_mapping():
    with pytest.raises(ConfigError):
        section({"bench": 3}, "bench")


def test_worker_count_respects_env(monkeypatch):
    monkeypatch.setenv("DCN_THREADS", "1")
    assert worker_count() == 1
    assert worker_count(0) == 1
    monkeypatch.delenv("DCN_THREADS")
    assert worker_count() >= 1


@pytest.mark.parametrize("total,parts", [(10, 3), (2, 8), (7, 1), (0, 4)])
def test_split_range_covers_everything_once(total, parts):
    chunks = split_range(total, parts)
    covered = [i for a, b in chunks for i in range(a, b)]
    assert covered == list(range(total))


def test_map_chunks_keeps_chunk_order():
    out = map_chunks(lambda a, b: list(range(a, b)), 101, workers=4)
    assert [i for part in out for i in part] == list(range(101))
