"""Scene-and-timeline description language.

A small line-oriented block format drives headless runs: object blocks
bind splat assets to materials and poses, camera/light/sim blocks set
parameters, and a timeline schedules grab/drag/release, parameter
changes, pins and kinematic trajectories. The parser is a hand-written
lexer + recursive descent with exact line:column diagnostics; semantic
problems are collected and reported together. format_script emits the
canonical form and round-trips through parse.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

PARAM_FIELDS = ("youngs", "poisson", "density", "damping")


class ScriptError(ValueError):
    def __init__(self, message, line=None, column=None, diagnostics=None):
        self.line = line
        self.column = column
        self.diagnostics = list(diagnostics or [])
        if line is not None:
            message = f"{line}:{column}: {message}"
        if self.diagnostics:
            message = "; ".join([message, *self.diagnostics]) if message else \
                "; ".join(self.diagnostics)
        super().__init__(message)


@dataclass(frozen=True)
class ObjectDecl:
    name: str
    splats: str = ""
    dynamic: bool = True
    youngs: float = 1000.0
    poisson: float = 0.3
    density: float = 1000.0
    damping: float = 0.0
    pose_t: tuple = (0.0, 0.0, 0.0)
    pose_r: tuple = (1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class LightDecl:
    direction: tuple = (0.0, -1.0, 0.0)
    strength: float = 0.35
    resolution: int = 256
    bias: float = None


@dataclass(frozen=True)
class CameraDecl:
    position: tuple = (0.0, 0.6, -2.5)
    lookat: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    fov_deg: float = 50.0
    width: int = 640
    height: int = 480
    near: float = 0.01
    far: float = 100.0


@dataclass(frozen=True)
class SimDecl:
    dt: float = 1e-4
    iterations: int = 10
    k_sigma: float = 2.0
    fps: float = 25.0
    duration: float = 1.0
    cell_band: tuple = (10_000, 30_000)
    gravity: tuple = (0.0, -9.8, 0.0)
    ground: float = None
    friction: float = 0.0
    repulsion: float = 0.0


@dataclass(frozen=True)
class GrabEvent:
    time: float
    obj: str
    point: tuple
    radius: float


@dataclass(frozen=True)
class DragEvent:
    time: float
    target: tuple


@dataclass(frozen=True)
class ReleaseEvent:
    time: float


@dataclass(frozen=True)
class SetParamEvent:
    time: float
    obj: str
    param: str
    value: float


@dataclass(frozen=True)
class PinEvent:
    time: float
    obj: str
    point: tuple
    radius: float


@dataclass(frozen=True)
class KinematicEvent:
    time: float
    obj: str
    point: tuple
    radius: float
    samples: tuple  # ((t, x, y, z), ...) time-sorted


@dataclass(frozen=True)
class InteractionScript:
    objects: tuple = ()
    light: LightDecl = None
    camera: CameraDecl = field(default_factory=CameraDecl)
    sim: SimDecl = field(default_factory=SimDecl)
    timeline: tuple = ()


# -- lexer ---------------------------------------------------------------------

_PUNCT = {"{": "LBRACE", "}": "RBRACE", "[": "LBRACKET", "]": "RBRACKET",
          ";": "SEMI"}


@dataclass(frozen=True)
class Token:
    kind: str
    value: object
    line: int
    column: int


def tokenize(text: str):
    tokens = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] not in '"\n':
                j += 1
            if j >= n or text[j] != '"':
                raise ScriptError("unterminated string", line, col)
            tokens.append(Token("STRING", text[i + 1:j], line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("IDENT", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isdigit() or (ch in "+-." and _starts_number(text, i)):
            j = i + 1 if ch in "+-" else i
            j0 = i
            while j < n and (text[j].isdigit() or text[j] in ".eE+-"):
                # only allow +/- right after an exponent marker
                if text[j] in "+-" and text[j - 1] not in "eE":
                    break
                j += 1
            try:
                value = float(text[j0:j])
            except ValueError:
                raise ScriptError(f"bad number {text[j0:j]!r}", line, col) from None
            tokens.append(Token("NUMBER", value, line, col))
            col += j - i
            i = j
            continue
        raise ScriptError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("EOF", None, line, col))
    return tokens


def _starts_number(text, i):
    j = i + 1 if text[i] in "+-" else i
    if j < len(text) and text[j] == ".":
        j += 1
    return j < len(text) and text[j].isdigit()


# -- parser --------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0
        self.semantic = []

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def fail(self, message, tok=None):
        tok = tok or self.tok
        raise ScriptError(message, tok.line, tok.column)

    def expect(self, kind, what=None):
        tok = self.tok
        if tok.kind != kind:
            self.fail(f"expected {what or kind.lower()}, got {_show(tok)}")
        self.pos += 1
        return tok

    def keyword(self, *words):
        tok = self.expect("IDENT", "keyword " + "|".join(words))
        if tok.value not in words:
            self.fail(f"expected {'|'.join(words)}, got {tok.value!r}", tok)
        return tok.value

    def number(self):
        return self.expect("NUMBER", "number").value

    def integer(self, minimum=1):
        tok = self.tok
        value = self.number()
        # overflowed literals (1e999) come back as inf; int() would raise
        if not math.isfinite(value) or value != int(value) or value < minimum:
            self.fail(f"expected integer >= {minimum}", tok)
        return int(value)

    def vector(self, count):
        self.expect("LBRACKET", "'['")
        values = tuple(self.number() for _ in range(count))
        self.expect("RBRACKET", "']'")
        return values

    def parse(self) -> InteractionScript:
        objects, timeline = [], []
        light, camera, sim = None, None, None
        while self.tok.kind != "EOF":
            tok = self.tok
            word = self.keyword("object", "light", "camera", "sim", "timeline")
            if word == "object":
                objects.append(self.object_block())
            elif word == "light":
                light = self.light_block()
            elif word == "camera":
                camera = self.camera_block()
            elif word == "sim":
                sim = self.sim_block()
            else:
                if timeline:
                    self.fail("duplicate timeline block", tok)
                timeline = self.timeline_block()
        script = InteractionScript(objects=tuple(objects), light=light,
                                   camera=camera or CameraDecl(),
                                   sim=sim or SimDecl(),
                                   timeline=tuple(timeline))
        self.check_semantics(script)
        return script

    def fields_block(self, handlers, what):
        self.expect("LBRACE", "'{'")
        seen = {}
        while self.tok.kind != "RBRACE":
            tok = self.tok
            key = self.expect("IDENT", f"{what} field").value
            if key not in handlers:
                self.fail(f"unknown {what} field {key!r}", tok)
            seen[key] = handlers[key]()
            self.expect("SEMI", "';'")
        self.expect("RBRACE", "'}'")
        return seen

    def object_block(self) -> ObjectDecl:
        name = self.expect("STRING", "object name").value
        out = {}
        handlers = {
            "splats": lambda: self.expect("STRING", "asset path").value,
            "static": lambda: False,
            "dynamic": lambda: True,
            "youngs": self.number,
            "poisson": self.number,
            "density": self.number,
            "damping": self.number,
            "pose": self.pose,
        }
        seen = self.fields_block(handlers, "object")
        if "static" in seen and "dynamic" in seen:
            self.semantic.append(f"object {name!r} is both static and dynamic")
        out["dynamic"] = "static" not in seen
        for key in ("splats", "youngs", "poisson", "density", "damping"):
            if key in seen:
                out[key] = seen[key]
        if "pose" in seen:
            out["pose_t"], out["pose_r"] = seen["pose"]
        if "splats" not in out:
            self.semantic.append(f"object {name!r} has no splats path")
        return ObjectDecl(name=name, **out)

    def pose(self):
        self.keyword("t")
        t = self.vector(3)
        self.keyword("r")
        r = self.vector(4)
        return t, r

    def light_block(self) -> LightDecl:
        seen = self.fields_block({
            "dir": lambda: self.vector(3),
            "strength": self.number,
            "resolution": self.integer,
            "bias": self.number,
        }, "light")
        mapped = {"direction" if k == "dir" else k: v for k, v in seen.items()}
        return LightDecl(**mapped)

    def camera_block(self) -> CameraDecl:
        seen = self.fields_block({
            "pos": lambda: self.vector(3),
            "lookat": lambda: self.vector(3),
            "up": lambda: self.vector(3),
            "fov": self.number,
            "width": self.integer,
            "height": self.integer,
            "near": self.number,
            "far": self.number,
        }, "camera")
        mapped = {{"pos": "position", "fov": "fov_deg"}.get(k, k): v
                  for k, v in seen.items()}
        return CameraDecl(**mapped)

    def sim_block(self) -> SimDecl:
        seen = self.fields_block({
            "dt": self.number,
            "iters": self.integer,
            "ksigma": self.number,
            "fps": self.number,
            "duration": self.number,
            "cellband": lambda: (self.integer(), self.integer()),
            "gravity": lambda: self.vector(3),
            "ground": self.number,
            "friction": self.number,
            "repulsion": self.number,
        }, "sim")
        mapped = {{"iters": "iterations", "ksigma": "k_sigma",
                   "cellband": "cell_band"}.get(k, k): v for k, v in seen.items()}
        return SimDecl(**mapped)

    def timeline_block(self):
        self.expect("LBRACE", "'{'")
        events = []
        while self.tok.kind != "RBRACE":
            self.keyword("at")
            time = self.number()
            kind_tok = self.tok
            kind = self.keyword("grab", "drag", "release", "setparam", "pin",
                                "kinematic")
            if kind == "grab":
                obj = self.expect("STRING", "object name").value
                self.keyword("point")
                point = self.vector(3)
                self.keyword("radius")
                radius = self.number()
                if radius <= 0:
                    self.fail("radius must be positive", kind_tok)
                events.append(GrabEvent(time, obj, point, radius))
            elif kind == "drag":
                self.keyword("to")
                events.append(DragEvent(time, self.vector(3)))
            elif kind == "release":
                events.append(ReleaseEvent(time))
            elif kind == "setparam":
                obj = self.expect("STRING", "object name").value
                ptok = self.tok
                param = self.expect("IDENT", "parameter name").value
                if param not in PARAM_FIELDS:
                    self.fail(f"unknown parameter {param!r}", ptok)
                events.append(SetParamEvent(time, obj, param, self.number()))
            elif kind == "pin":
                obj = self.expect("STRING", "object name").value
                self.keyword("point")
                point = self.vector(3)
                self.keyword("radius")
                radius = self.number()
                if radius <= 0:
                    self.fail("radius must be positive", kind_tok)
                events.append(PinEvent(time, obj, point, radius))
            else:
                obj = self.expect("STRING", "object name").value
                self.keyword("point")
                point = self.vector(3)
                self.keyword("radius")
                radius = self.number()
                if radius <= 0:
                    self.fail("radius must be positive", kind_tok)
                self.keyword("move")
                samples = []
                while self.tok.kind == "LBRACKET":
                    samples.append(self.vector(4))
                if not samples:
                    self.fail("kinematic needs at least one [t x y z] sample")
                times = [s[0] for s in samples]
                if times != sorted(times):
                    self.semantic.append(
                        f"kinematic samples for {obj!r} not time-sorted")
                events.append(KinematicEvent(time, obj, point, radius,
                                             tuple(samples)))
            self.expect("SEMI", "';'")
        self.expect("RBRACE", "'}'")
        return events

    def check_semantics(self, script: InteractionScript):
        names = [o.name for o in script.objects]
        for name in sorted({n for n in names if names.count(n) > 1}):
            self.semantic.append(f"duplicate object name {name!r}")
        dynamic = {o.name for o in script.objects if o.dynamic}
        declared = set(names)
        times = [e.time for e in script.timeline]
        if any(b < a for a, b in zip(times, times[1:])):
            self.semantic.append("timeline times must be non-decreasing")
        grabbed = False
        for ev in script.timeline:
            obj = getattr(ev, "obj", None)
            if obj is not None:
                if obj not in declared:
                    self.semantic.append(
                        f"event at {ev.time} references unknown object {obj!r}")
                elif obj not in dynamic:
                    self.semantic.append(
                        f"event at {ev.time} targets static object {obj!r}")
            if isinstance(ev, GrabEvent):
                grabbed = True
            elif isinstance(ev, DragEvent) and not grabbed:
                self.semantic.append(f"drag at {ev.time} without grab")
            elif isinstance(ev, ReleaseEvent):
                if not grabbed:
                    self.semantic.append(f"release at {ev.time} without grab")
                grabbed = False
        if self.semantic:
            raise ScriptError("", diagnostics=self.semantic)


def _show(tok: Token):
    return "end of input" if tok.kind == "EOF" else repr(str(tok.value))


def parse(text: str) -> InteractionScript:
    """Text -> InteractionScript; raises ScriptError with line:column for
    lexical/syntax problems and with a collected list for semantic ones."""
    return _Parser(tokenize(text)).parse()


# -- validation ------------------------------------------------------------------

def validate(script: InteractionScript, resolver=os.path.exists):
    """Runnability diagnostics; empty list means the script can run."""
    out = []
    for obj in script.objects:
        if not obj.splats:
            out.append(f"object {obj.name!r}: missing splats path")
        elif not resolver(obj.splats):
            out.append(f"object {obj.name!r}: asset not found: {obj.splats}")
        if obj.youngs <= 0:
            out.append(f"object {obj.name!r}: youngs modulus must be positive")
        if not 0.0 <= obj.poisson < 0.5:
            out.append(f"object {obj.name!r}: poisson ratio must lie in [0, 0.5)")
        if obj.density <= 0:
            out.append(f"object {obj.name!r}: density must be positive")
        if obj.damping < 0:
            out.append(f"object {obj.name!r}: damping must be non-negative")
    sim = script.sim
    if sim.dt <= 0:
        out.append("sim: dt must be positive")
    if sim.fps <= 0:
        out.append("sim: fps must be positive")
    if sim.duration <= 0:
        out.append("sim: duration must be positive")
    if sim.iterations < 1:
        out.append("sim: iterations must be at least 1")
    if sim.k_sigma <= 0:
        out.append("sim: ksigma must be positive")
    if not 0 < sim.cell_band[0] <= sim.cell_band[1]:
        out.append("sim: cell band must be a positive ordered pair")
    if not 0.0 <= sim.friction <= 1.0:
        out.append("sim: friction must lie in [0, 1]")
    if sim.repulsion < 0:
        out.append("sim: repulsion radius must be non-negative")
    if script.light is not None and not 0.0 <= script.light.strength <= 1.0:
        out.append("light: strength must lie in [0, 1]")
    times = [e.time for e in script.timeline]
    if any(b < a for a, b in zip(times, times[1:])):
        out.append("timeline: times must be non-decreasing")
    return out


# -- formatter --------------------------------------------------------------------

def _num(x):
    if isinstance(x, float) and x == int(x) and abs(x) < 1e16:
        return repr(int(x))
    return repr(x)


def _vec(values):
    return "[" + " ".join(_num(float(v)) for v in values) + "]"


def format_script(script: InteractionScript) -> str:
    """Canonical form: parse(format_script(parse(s))) == parse(s)."""
    lines = []
    for o in script.objects:
        lines.append(f'object "{o.name}" {{')
        lines.append(f'  splats "{o.splats}";')
        lines.append(f"  {'dynamic' if o.dynamic else 'static'};")
        for key in ("youngs", "poisson", "density", "damping"):
            lines.append(f"  {key} {_num(getattr(o, key))};")
        lines.append(f"  pose t {_vec(o.pose_t)} r {_vec(o.pose_r)};")
        lines.append("}")
    if script.light is not None:
        li = script.light
        lines.append("light {")
        lines.append(f"  dir {_vec(li.direction)};")
        lines.append(f"  strength {_num(li.strength)};")
        lines.append(f"  resolution {li.resolution};")
        if li.bias is not None:
            lines.append(f"  bias {_num(li.bias)};")
        lines.append("}")
    c = script.camera
    lines.append("camera {")
    lines.append(f"  pos {_vec(c.position)};")
    lines.append(f"  lookat {_vec(c.lookat)};")
    lines.append(f"  up {_vec(c.up)};")
    lines.append(f"  fov {_num(c.fov_deg)};")
    lines.append(f"  width {c.width};")
    lines.append(f"  height {c.height};")
    lines.append(f"  near {_num(c.near)};")
    lines.append(f"  far {_num(c.far)};")
    lines.append("}")
    s = script.sim
    lines.append("sim {")
    lines.append(f"  dt {_num(s.dt)};")
    lines.append(f"  iters {s.iterations};")
    lines.append(f"  ksigma {_num(s.k_sigma)};")
    lines.append(f"  fps {_num(s.fps)};")
    lines.append(f"  duration {_num(s.duration)};")
    lines.append(f"  cellband {s.cell_band[0]} {s.cell_band[1]};")
    lines.append(f"  gravity {_vec(s.gravity)};")
    if s.ground is not None:
        lines.append(f"  ground {_num(s.ground)};")
    lines.append(f"  friction {_num(s.friction)};")
    lines.append(f"  repulsion {_num(s.repulsion)};")
    lines.append("}")
    lines.append("timeline {")
    for ev in script.timeline:
        if isinstance(ev, GrabEvent):
            body = (f'grab "{ev.obj}" point {_vec(ev.point)} '
                    f"radius {_num(ev.radius)}")
        elif isinstance(ev, DragEvent):
            body = f"drag to {_vec(ev.target)}"
        elif isinstance(ev, ReleaseEvent):
            body = "release"
        elif isinstance(ev, SetParamEvent):
            body = f'setparam "{ev.obj}" {ev.param} {_num(ev.value)}'
        elif isinstance(ev, PinEvent):
            body = f'pin "{ev.obj}" point {_vec(ev.point)} radius {_num(ev.radius)}'
        else:
            samples = " ".join(_vec(s) for s in ev.samples)
            body = (f'kinematic "{ev.obj}" point {_vec(ev.point)} '
                    f"radius {_num(ev.radius)} move {samples}")
        lines.append(f"  at {_num(ev.time)} {body};")
    lines.append("}")
    return "\n".join(lines) + "\n"
