"""Text format for skeleton description files (``.skel``).

Field-by-field documentation lives in ``docs/skeleton-format.md``.  Floats are
written with ``repr`` so that a save/load round trip is bit-exact.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError
from .skeleton import Body, Joint, MarkerDef, Skeleton

FORMAT_HEADER = "skeleton v1"


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).ravel())


def save_skeleton(skel: Skeleton, path) -> None:
    lines = [FORMAT_HEADER]
    lines.append(f"name {skel.name}")
    lines.append(f"gravity {_fmt(skel.gravity)}")
    lines.append(f"height {repr(skel.subject_height)}")
    lines.append(f"nominal_mass {repr(skel.subject_mass_nominal)}")
    lines.append("contacts " + " ".join(str(c) for c in skel.contact_bodies))
    for body, joint in zip(skel.bodies, skel.joints):
        lines.append(f"body {body.name}")
        lines.append(f"  mass {repr(float(body.mass))}")
        lines.append(f"  inertia {_fmt(body.inertia)}")
        lines.append(f"  com {_fmt(body.com_offset)}")
        lines.append(f"  scale {_fmt(body.scale)}")
        joint_line = f"  joint {joint.kind} {joint.parent} {_fmt(joint.offset)}"
        if joint.axis is not None:
            joint_line += f" axis {_fmt(joint.axis)}"
        lines.append(joint_line)
    for m in skel.markers:
        lines.append(f"marker {m.name} {m.body} {_fmt(m.offset)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_skeleton(path) -> Skeleton:
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()

    def fail(msg, ln):
        raise ParseError(msg, line=ln + 1)

    if not raw or raw[0].strip() != FORMAT_HEADER:
        fail(f"expected header {FORMAT_HEADER!r}", 0)

    name = None
    gravity = None
    height = 1.0
    nominal_mass = None
    contacts = []
    markers = []
    bodies = []
    joints = []
    current = None  # partially parsed body dict

    def flush_body(ln):
        if current is None:
            return
        for key in ("mass", "inertia", "com", "joint"):
            if key not in current:
                fail(f"body {current['name']!r} missing {key!r}", ln)
        bodies.append(Body(current["name"], current["mass"], current["inertia"],
                           current["com"], current.get("scale", np.ones(3))))
        joints.append(current["joint"])

    for ln, rawline in enumerate(raw[1:], start=1):
        line = rawline.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key, args = parts[0], parts[1:]
        try:
            if key == "name":
                name = " ".join(args)
            elif key == "gravity":
                gravity = [float(x) for x in args]
            elif key == "height":
                height = float(args[0])
            elif key == "nominal_mass":
                nominal_mass = float(args[0])
            elif key == "contacts":
                contacts = [int(x) for x in args]
            elif key == "body":
                flush_body(ln)
                current = {"name": " ".join(args)}
            elif key in ("mass", "inertia", "com", "scale"):
                if current is None:
                    fail(f"{key!r} outside a body block", ln)
                vals = [float(x) for x in args]
                if key == "mass":
                    current["mass"] = vals[0]
                elif key == "inertia":
                    current["inertia"] = np.array(vals).reshape(3, 3)
                else:
                    current[key.replace("com", "com")] = np.array(vals)
                    if key == "com":
                        current["com"] = np.array(vals)
            elif key == "joint":
                if current is None:
                    fail("'joint' outside a body block", ln)
                kind = args[0]
                parent = int(args[1])
                offset = [float(x) for x in args[2:5]]
                axis = None
                if len(args) > 5:
                    if args[5] != "axis":
                        fail("expected 'axis' keyword", ln)
                    axis = [float(x) for x in args[6:9]]
                current["joint"] = Joint(kind, parent, offset, axis)
            elif key == "marker":
                markers.append(MarkerDef(args[0], int(args[1]),
                                         [float(x) for x in args[2:5]]))
            else:
                fail(f"unknown key {key!r}", ln)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ParseError):
                raise
            fail(f"cannot parse {key!r} entry: {exc}", ln)
    flush_body(len(raw))

    if name is None:
        raise ParseError("missing 'name' entry")
    if gravity is None:
        gravity = [0.0, -9.81, 0.0]
    return Skeleton(name, bodies, joints, gravity, contacts, markers,
                    height, nominal_mass)
