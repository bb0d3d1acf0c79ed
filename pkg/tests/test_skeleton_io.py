import importlib.resources

import numpy as np
import pytest

from mocapdyn import skeleton as sk
from mocapdyn.errors import ParseError
from mocapdyn.skeleton_io import load_skeleton, save_skeleton


def assert_skeletons_bit_equal(a: sk.Skeleton, b: sk.Skeleton):
    assert b.name == a.name
    assert np.array_equal(b.gravity, a.gravity)
    assert b.subject_height == a.subject_height
    assert b.subject_mass_nominal == a.subject_mass_nominal
    assert list(b.contact_bodies) == list(a.contact_bodies)
    assert len(b.bodies) == len(a.bodies)
    for b1, b2 in zip(a.bodies, b.bodies):
        assert b2.name == b1.name
        assert b2.mass == b1.mass
        assert np.array_equal(b2.inertia, b1.inertia)
        assert np.array_equal(b2.com_offset, b1.com_offset)
        assert np.array_equal(b2.scale, b1.scale)
    for j1, j2 in zip(a.joints, b.joints):
        assert j2.kind == j1.kind
        assert j2.parent == j1.parent
        assert np.array_equal(j2.offset, j1.offset)
        if j1.axis is None:
            assert j2.axis is None
        else:
            assert np.array_equal(j2.axis, j1.axis)
    assert len(b.markers) == len(a.markers)
    for m1, m2 in zip(a.markers, b.markers):
        assert m2.name == m1.name
        assert m2.body == m1.body
        assert np.array_equal(m2.offset, m1.offset)


@pytest.mark.parametrize("name", ["pendulum2", "freebox6", "biped12"])
def test_round_trip_is_bit_exact(tmp_path, name):
    skel = sk.builtin_models()[name]
    path = tmp_path / f"{name}.skel"
    save_skeleton(skel, path)
    assert_skeletons_bit_equal(skel, load_skeleton(path))


@pytest.mark.parametrize("name", ["pendulum2", "freebox6", "biped12"])
def test_shipped_model_files_match_constructors(name):
    path = importlib.resources.files("mocapdyn") / "models" / f"{name}.skel"
    assert_skeletons_bit_equal(sk.builtin_models()[name], load_skeleton(path))


def test_bad_header_raises(tmp_path):
    p = tmp_path / "bad.skel"
    p.write_text("not a skeleton\n")
    with pytest.raises(ParseError):
        load_skeleton(p)


def test_missing_name_raises(tmp_path):
    p = tmp_path / "noname.skel"
    p.write_text("skeleton v1\ngravity 0.0 -9.81 0.0\n")
    with pytest.raises(ParseError):
        load_skeleton(p)


def test_malformed_number_reports_line(tmp_path):
    skel = sk.builtin_models()["pendulum2"]
    p = tmp_path / "broken.skel"
    save_skeleton(skel, p)
    lines = p.read_text().splitlines()
    idx = next(i for i, ln in enumerate(lines) if ln.strip().startswith("mass"))
    lines[idx] = "  mass not_a_number"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as exc:
        load_skeleton(p)
    assert exc.value.line == idx + 1


def test_comments_and_blank_lines_ignored(tmp_path):
    skel = sk.builtin_models()["freebox6"]
    p = tmp_path / "c.skel"
    save_skeleton(skel, p)
    lines = p.read_text().splitlines()
    padded = [lines[0], "", "# a comment"] + lines[1:] + ["", "# trailing"]
    p.write_text("\n".join(padded) + "\n")
    assert_skeletons_bit_equal(skel, load_skeleton(p))


def test_incomplete_body_block_raises(tmp_path):
    p = tmp_path / "inc.skel"
    p.write_text("skeleton v1\nname x\nbody only\n  mass 1.0\n")
    with pytest.raises(ParseError):
        load_skeleton(p)
