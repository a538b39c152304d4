import pytest
from hypothesis import given, settings, strategies as st

from wkam.config import ExperimentConfig, STUDIES, dumps, load, loads
from wkam.errors import DomainError


def test_defaults_round_trip():
    cfg = ExperimentConfig()
    assert loads(dumps(cfg)) == cfg


eps_lists = st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=5, unique=True).map(
    lambda v: tuple(sorted(v, reverse=True)))


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(STUDIES), eps_lists,
       st.lists(st.floats(-1.9, 1.9), min_size=1, max_size=3).map(tuple),
       st.integers(4, 13).map(lambda k: 2 ** k), st.one_of(st.none(), st.floats(1e-4, 0.1)),
       st.integers(0, 2 ** 64 - 1), st.booleans())
def test_parse_serialize_parse(kind, eps, c, N, dt, seed, pi):
    cfg = ExperimentConfig(kind=kind, preset="F2", eps_list=eps, c=c, N=N, dt=dt, seed=seed,
                           policy_iteration=pi)
    text = dumps(cfg)
    again = loads(text)
    assert again == cfg
    assert dumps(again) == text


def test_comments_and_blank_lines():
    cfg = loads("# a comment\n\nstudy.kind = barrier\nmodel.preset = F2\n")
    assert cfg.kind == "barrier" and cfg.preset == "F2"


@pytest.mark.parametrize("text", [
    "study.kind = nonsense",
    "study.eps_list = 0.01, 0.02",
    "study.eps_list = -0.1",
    "grid.N = 1000",
    "model.preset = nope",
    "unknown.key = 1",
    "grid.N = many",
    "no equals sign",
    "study.kind = rate-c1\nmodel.preset = zero",
    "study.seed = -1",
])
def test_bad_configs(text):
    with pytest.raises(DomainError):
        loads(text)


def test_digest_ignores_location_and_threads():
    a = ExperimentConfig(out="x", threads=4)
    b = ExperimentConfig(out="y", threads=None)
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig(N=2048).digest()


def test_load_from_file(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("study.kind = solve\nsolver.dt = auto\n")
    cfg = load(p)
    assert cfg.dt is None
    assert cfg.solver().dt is None
