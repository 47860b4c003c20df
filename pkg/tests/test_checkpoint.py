import pytest

from tined.checkpoint import MAGIC, load_checkpoint, read_header, save_checkpoint
from tined.errors import DataError
from tined.models import init_teacher, inject_teacher


@pytest.mark.parametrize("kind,opts", [("graphsage", {}), ("gat", {"slope": 0.1}), ("appnp", {"alpha": 0.3}),
                                       ("graphsage", {"aggregator": "gcn"})])
def test_teacher_roundtrip_is_bitwise(tmp_path, kind, opts):
    t = init_teacher(kind, 5, 7, 3, seed=2, **opts)
    save_checkpoint(tmp_path / "t.ckpt", t, extra={"seed": 2})
    u, extra = load_checkpoint(tmp_path / "t.ckpt")
    assert extra["seed"] == 2
    assert (u.kind, u.slope, u.alpha, u.aggregator) == (t.kind, t.slope, t.alpha, t.aggregator)
    for p, q in zip(t.params(), u.params()):
        assert p.value.tobytes() == q.value.tobytes()


def test_student_roundtrip_keeps_roles_and_multipliers(tmp_path):
    s = inject_teacher(init_teacher("gcn", 4, 6, 2, seed=0), eta=0.25, init_seed=1)
    save_checkpoint(tmp_path / "s.ckpt", s)
    r, _ = load_checkpoint(tmp_path / "s.ckpt")
    for a, b in zip(s.layers, r.layers):
        assert (a.role, a.activation) == (b.role, b.activation)
        assert a.weight.multiplier == b.weight.multiplier
        assert a.weight.value.tobytes() == b.weight.value.tobytes()


def test_header_readable(tmp_path):
    save_checkpoint(tmp_path / "t.ckpt", init_teacher("gcn", 4, 6, 2, seed=0))
    assert (tmp_path / "t.ckpt").read_bytes()[:6] == MAGIC
    assert read_header(tmp_path / "t.ckpt")[0]["model"] == "teacher"


def test_bad_magic(tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"NOTACKPT" + b"\0" * 16)
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "x.ckpt")
