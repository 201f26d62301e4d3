"""Scene-script language checks: grammar coverage, exact diagnostics,
round-trip stability, validation, and parser totality under fuzzing."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatdyn.script import (
    CameraDecl,
    DragEvent,
    GrabEvent,
    InteractionScript,
    KinematicEvent,
    LightDecl,
    ObjectDecl,
    PinEvent,
    ReleaseEvent,
    ScriptError,
    SetParamEvent,
    SimDecl,
    format_script,
    parse,
    validate,
)

MINIMAL = """
object "ball" { splats "ball.ply"; }
timeline { }
"""

FULL = """
# a complete scene
object "ball" {
  splats "assets/ball.ply";
  dynamic;
  youngs 5e3; poisson 0.35; density 800; damping 2;
  pose t [0 1.5 0] r [1 0 0 0];
}
object "floor" { splats "assets/floor.ply"; static; }
light { dir [0.2 -1 0.1]; strength 0.4; resolution 128; }
camera { pos [0 1 -3]; lookat [0 0.5 0]; fov 55; width 320; height 240; }
sim { dt 1e-4; iters 10; ksigma 2; fps 25; gravity [0 -9.8 0]; ground 0; friction 0.3; }
timeline {
  at 0.2 grab "ball" point [0 1.5 0] radius 0.2;
  at 0.3 drag to [0.5 1.5 0];
  at 0.5 drag to [0.5 1.2 0.2];
  at 0.8 release;
  at 1.0 setparam "ball" youngs 2e4;
  at 1.0 pin "ball" point [0 0 0] radius 0.05;
  at 1.2 kinematic "ball" point [0 1 0] radius 0.1 move [0 0 0 0] [1 0.5 0 0];
}
"""


def test_minimal_script_gets_default_material():
    script = parse(MINIMAL)
    assert len(script.objects) == 1
    obj = script.objects[0]
    assert obj == ObjectDecl(name="ball", splats="ball.ply")
    assert (obj.youngs, obj.poisson, obj.density) == (1000.0, 0.3, 1000.0)
    assert obj.dynamic
    assert script.timeline == ()
    assert script.camera == CameraDecl()
    assert script.sim == SimDecl()
    assert script.light is None


def test_full_script_parses():
    script = parse(FULL)
    assert [o.name for o in script.objects] == ["ball", "floor"]
    assert not script.objects[1].dynamic
    assert script.light == LightDecl(direction=(0.2, -1.0, 0.1), strength=0.4,
                                     resolution=128)
    assert script.camera.fov_deg == 55.0
    assert script.sim.ground == 0.0
    kinds = [type(e) for e in script.timeline]
    assert kinds == [GrabEvent, DragEvent, DragEvent, ReleaseEvent,
                     SetParamEvent, PinEvent, KinematicEvent]
    assert script.timeline[0].radius == 0.2
    assert script.timeline[-1].samples == ((0.0, 0.0, 0.0, 0.0),
                                           (1.0, 0.5, 0.0, 0.0))


def test_comments_and_scientific_notation():
    script = parse('object "o" { splats "a.ply"; youngs 1.5e-2; } # tail\n')
    assert script.objects[0].youngs == 1.5e-2


@pytest.mark.parametrize("snippet,needle", [
    ('object "a" { splats "p"; }\ntimeline { at 0.5 drag to [0 0 0]; }',
     "drag at 0.5 without grab"),
    ('object "a" { splats "p"; }\ntimeline { at 0.1 release; }',
     "release at 0.1 without grab"),
    ('object "a" { splats "p"; } object "a" { splats "q"; }',
     "duplicate object name 'a'"),
    ('object "a" { splats "p"; }\n'
     'timeline { at 0 grab "nope" point [0 0 0] radius 1; }',
     "unknown object 'nope'"),
    ('object "a" { splats "p"; static; }\n'
     'timeline { at 0 grab "a" point [0 0 0] radius 1; }',
     "targets static object 'a'"),
    ('object "a" { splats "p"; }\ntimeline {'
     ' at 1 grab "a" point [0 0 0] radius 1; at 0.5 release; }',
     "non-decreasing"),
    ('object "a" { }', "has no splats path"),
])
def test_semantic_errors_collected(snippet, needle):
    with pytest.raises(ScriptError) as err:
        parse(snippet)
    assert needle in str(err.value)


def test_multiple_semantic_errors_reported_together():
    bad = ('object "a" { splats "p"; } object "a" { splats "q"; }\n'
           'timeline { at 0.5 drag to [0 0 0]; at 0.2 release; }')
    with pytest.raises(ScriptError) as err:
        parse(bad)
    assert len(err.value.diagnostics) >= 3


@pytest.mark.parametrize("text,line,col", [
    ('object "a" {\n  splats "p";\n  bogus 3;\n}', 3, 3),
    ('object "a" { splats "p"; }\n@', 2, 1),
    ('object "a" { splats "p" }', 1, 25),
    ('object "a" { splats "p"; poisson ; }', 1, 34),
    ('camera { fov [1 2 3]; }', 1, 14),
])
def test_error_positions_are_exact(text, line, col):
    with pytest.raises(ScriptError) as err:
        parse(text)
    assert (err.value.line, err.value.column) == (line, col)


def test_unterminated_string_position():
    with pytest.raises(ScriptError) as err:
        parse('object "abc')
    assert (err.value.line, err.value.column) == (1, 8)


def test_round_trip_canonical_form():
    for text in (MINIMAL, FULL):
        script = parse(text)
        printed = format_script(script)
        again = parse(printed)
        assert again == script
        assert format_script(again) == printed


def test_validate_clean_script(tmp_path):
    asset = tmp_path / "ball.ply"
    asset.write_bytes(b"x")
    script = parse(f'object "b" {{ splats "{asset}"; }} timeline {{ }}')
    assert validate(script) == []


def test_validate_poisson_bound(tmp_path):
    asset = tmp_path / "ball.ply"
    asset.write_bytes(b"x")
    script = parse(f'object "b" {{ splats "{asset}"; poisson 0.6; }}')
    out = validate(script)
    assert len(out) == 1 and "poisson" in out[0] and "0.5" in out[0]


def test_validate_missing_asset():
    script = parse('object "b" { splats "missing/thing.ply"; }')
    out = validate(script)
    assert len(out) == 1 and "missing/thing.ply" in out[0]


def test_validate_uses_resolver():
    script = parse('object "b" { splats "virtual.ply"; }')
    assert validate(script, resolver=lambda p: True) == []


def test_parse_rejects_unknown_block():
    with pytest.raises(ScriptError, match="object|light|camera|sim|timeline"):
        parse("banana { }")


def test_static_and_dynamic_conflict():
    with pytest.raises(ScriptError, match="both static and dynamic"):
        parse('object "a" { splats "p"; static; dynamic; }')


@pytest.mark.parametrize("literal", ["1e309", "-1e309", "2.5"])
def test_overflowed_integer_literal_is_a_parse_error(literal):
    with pytest.raises(ScriptError, match="expected integer"):
        parse('object "a" { splats "p"; } timeline { }'.replace(
            "timeline", f"camera {{ width {literal}; }} timeline"))


def test_fuzz_random_bytes_never_crash():
    rng = np.random.default_rng(20240817)
    for _ in range(20_000):
        size = int(rng.integers(0, 40))
        data = bytes(rng.integers(0, 256, size, dtype=np.uint8))
        try:
            parse(data.decode("utf-8", errors="replace"))
        except ScriptError:
            pass


def test_fuzz_token_soup_never_crashes():
    rng = np.random.default_rng(7)
    atoms = ['object', '"a"', '{', '}', '[', ']', ';', 'splats', 'timeline',
             'at', 'grab', 'drag', 'to', 'release', '1.5', '-2e-3', 'point',
             'radius', '#x', '"p.ply"', 'pose', 't', 'r', 'static']
    for _ in range(2000):
        n = int(rng.integers(0, 25))
        text = " ".join(atoms[i] for i in rng.integers(0, len(atoms), n))
        try:
            parse(text)
        except ScriptError:
            pass


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=60))
def test_fuzz_hypothesis_text(text):
    try:
        parse(text)
    except ScriptError:
        pass


def test_format_of_programmatic_script():
    script = InteractionScript(
        objects=(ObjectDecl(name="cube", splats="cube.ply", damping=1.0),),
        light=LightDecl(),
        timeline=(GrabEvent(0.0, "cube", (0.0, 0.0, 0.0), 0.1),
                  ReleaseEvent(0.5)),
    )
    assert parse(format_script(script)) == script
