"""The ``.ryx`` experiment-description format.

A line-oriented, sectioned key/value text::

    # two atoms 3 um apart
    [atoms]
    positions_um = (0, 0, 0); (3, 0, 0)
    level = 59D3/2

    [drive]
    name = excite
    duration_us = 0.35355
    rabi_mhz = 1.0

    [scan]
    drive.duration_us = 0:2:0.02

The grammar is in ``docs/format.ebnf``. Every parse problem is reported as a
:class:`Diagnostic` with a stable code and a 1-based line:column.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Union

import numpy as np

from .model import (
    LEVEL_PRESETS,
    AddressingBeam,
    AtomGeometry,
    DomainError,
    ExperimentModel,
    GlobalDrive,
    RydbergLevel,
    TrapModel,
    effective_wavevector,
)
from .noise import NoiseModel
from .pulses import AddressItem, DriveItem, PulseSequence, ScheduleError

E_EMPTY = "E_EMPTY"
E_SYNTAX = "E_SYNTAX"
E_SECTION = "E_SECTION"
E_KEY = "E_KEY"
E_VALUE = "E_VALUE"
E_MISSING = "E_MISSING"
E_DUPLICATE = "E_DUPLICATE"
E_ATOMS = "E_ATOMS"
E_OVERLAP = "E_OVERLAP"
E_NEGATIVE = "E_NEGATIVE"
E_REF = "E_REF"
E_SCAN = "E_SCAN"

Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    line: int = 1
    column: int = 1
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.code} {self.message}"


class ParseError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))

    @property
    def code(self) -> str:
        return self.diagnostics[0].code


# ---------------------------------------------------------------------------
# document model


@dataclass(frozen=True)
class AtomsSection:
    positions_um: tuple[Vec3, ...]
    level: str = "59D3/2"
    c6_mhz_um6: float | None = None


@dataclass(frozen=True)
class LaserSection:
    lambda_red_um: float = 0.795
    lambda_blue_um: float = 0.474
    geometry: str = "counter"
    axis: Vec3 = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class TrapSection:
    waist_um: float = 1.0
    depth_mhz: float = 20.0
    axial_aspect: float = 5.2


@dataclass(frozen=True)
class DriveBlock:
    name: str
    rabi_mhz: float
    detuning_mhz: float = 0.0
    phase_rad: float = 0.0
    t_start_us: float | None = None
    duration_us: float | None = None
    during: str | None = None


@dataclass(frozen=True)
class AddressBlock:
    name: str
    peak_shift_mhz: float
    waist_um: float
    center_um: Vec3
    axis: Vec3 = (0.0, 0.0, 1.0)
    t_start_us: float | None = None
    duration_us: float | None = None
    during: str | None = None


@dataclass(frozen=True)
class NoiseSection:
    temperature_uk: float = 50.0
    shots: int = 100
    eps_g_to_r: float = 0.05
    eps_r_to_g: float = 0.05
    prep_efficiency: float = 1.0
    rng_seed: int = 0


@dataclass(frozen=True)
class ScanSpec:
    parameter: str
    start: float
    stop: float
    step: float

    def __post_init__(self) -> None:
        if not self.step > 0.0:
            raise ValueError("scan step must be > 0")
        if self.stop < self.start:
            raise ValueError("scan stop must be >= start")

    @property
    def count(self) -> int:
        return int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1

    def values(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @classmethod
    def parse(cls, parameter: str, text: str) -> "ScanSpec":
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"scan range must be start:stop:step, got {text!r}")
        start, stop, step = (_parse_float(p) for p in parts)
        return cls(parameter, start, stop, step)

    def range_text(self) -> str:
        return f"{_fmt_float(self.start)}:{_fmt_float(self.stop)}:{_fmt_float(self.step)}"


Block = Union[DriveBlock, AddressBlock]


@dataclass(frozen=True)
class ExperimentDocument:
    atoms: AtomsSection
    laser: LaserSection = LaserSection()
    trap: TrapSection = TrapSection()
    blocks: tuple[Block, ...] = ()
    noise: NoiseSection = NoiseSection()
    scan: ScanSpec | None = None
    warnings: tuple[Diagnostic, ...] = field(default=(), compare=False)

    @property
    def drives(self) -> tuple[DriveBlock, ...]:
        return tuple(b for b in self.blocks if isinstance(b, DriveBlock))

    @property
    def addresses(self) -> tuple[AddressBlock, ...]:
        return tuple(b for b in self.blocks if isinstance(b, AddressBlock))

    @property
    def atom_count(self) -> int:
        return len(self.atoms.positions_um)

    # -- physics objects ---------------------------------------------------

    def level(self) -> RydbergLevel:
        return RydbergLevel.preset(self.atoms.level, self.atoms.c6_mhz_um6)

    def model(self) -> ExperimentModel:
        t = self.trap
        return ExperimentModel(
            AtomGeometry(self.atoms.positions_um),
            self.level(),
            TrapModel(t.waist_um, t.depth_mhz, t.axial_aspect),
        )

    def wavevector(self) -> Vec3:
        las = self.laser
        return effective_wavevector(las.lambda_red_um, las.lambda_blue_um, las.geometry, las.axis)

    def timings(self) -> dict[str, tuple[float, float]]:
        """Resolved (t_start, duration) per block name, in declaration order."""
        out: dict[str, tuple[float, float]] = {}
        cursor = 0.0
        for b in self.blocks:
            if b.during is not None:
                if b.during not in out:
                    raise KeyError(b.during)
                start, dur = out[b.during]
            else:
                start = b.t_start_us if b.t_start_us is not None else cursor
                dur = b.duration_us if b.duration_us is not None else 0.0
            out[b.name] = (start, dur)
            cursor = start + dur
        return out

    def sequence(self) -> PulseSequence:
        """Build the validated schedule; zero-length blocks are dropped."""
        k = self.wavevector()
        items = []
        for b in self.blocks:
            start, dur = self.timings()[b.name]
            if dur == 0.0:
                continue
            if isinstance(b, DriveBlock):
                drive = GlobalDrive(b.rabi_mhz, b.detuning_mhz, k, b.phase_rad)
                items.append(DriveItem(start, dur, drive, b.name))
            else:
                beam = AddressingBeam(b.center_um, b.peak_shift_mhz, b.waist_um, b.axis)
                items.append(AddressItem(start, dur, beam, b.name))
        return PulseSequence(tuple(items))

    def noise_model(self) -> NoiseModel:
        n, t = self.noise, self.trap
        return NoiseModel(
            temperature=n.temperature_uk,
            trap=TrapModel(t.waist_um, t.depth_mhz, t.axial_aspect),
            shots=n.shots,
            eps_g_to_r=n.eps_g_to_r,
            eps_r_to_g=n.eps_r_to_g,
            prep_efficiency=n.prep_efficiency,
            rng_seed=n.rng_seed,
        )

    # -- parameter paths ---------------------------------------------------

    def get_value(self, path: str) -> Any:
        obj, attr, rest = _resolve(self, path)
        value = getattr(obj, attr)
        return _get_component(value, rest, path)

    def with_value(self, path: str, value: Any) -> "ExperimentDocument":
        """Copy of the document with the parameter at ``path`` replaced.

        ``value`` may be a Python value or a string in ``.ryx`` syntax.
        """
        obj, attr, rest = _resolve(self, path)
        kind = _KEY_TYPES[type(obj)][attr]
        old = getattr(obj, attr)
        if rest:
            comp = _coerce(value, "float")
            new = _set_component(old, rest, comp, path)
        else:
            new = _coerce(value, kind)
        _check_key(type(obj), attr, new)
        new_obj = dataclasses.replace(obj, **{attr: new})
        return _replace_section(self, obj, new_obj)

    def scan_values(self) -> np.ndarray:
        return self.scan.values() if self.scan is not None else np.array([])


# ---------------------------------------------------------------------------
# value parsing / formatting

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_VEC_RE = re.compile(rf"^\(\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*\)$")
_INT_RE = re.compile(r"^[-+]?\d+$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")
_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
_TEXT_RE = re.compile(r"^[^\s#;=\[\]()][^#;=\[\]()]*$")


def _parse_float(text: str) -> float:
    text = text.strip()
    if not re.fullmatch(_NUM, text):
        raise ValueError(f"not a number: {text!r}")
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"number out of range: {text!r}")
    return value


def _parse_int(text: str) -> int:
    text = text.strip()
    if not _INT_RE.match(text):
        raise ValueError(f"not an integer: {text!r}")
    return int(text)


def _parse_vec(text: str) -> Vec3:
    m = _VEC_RE.match(text.strip())
    if not m:
        raise ValueError(f"expected a vector like (x, y, z), got {text!r}")
    out = tuple(float(g) for g in m.groups())
    if not all(math.isfinite(x) for x in out):
        raise ValueError(f"vector component out of range: {text!r}")
    return out  # type: ignore[return-value]


def _parse_vec_list(text: str) -> tuple[Vec3, ...]:
    return tuple(_parse_vec(part) for part in text.split(";"))


def _parse_name(text: str) -> str:
    text = text.strip()
    if not _NAME_RE.match(text):
        raise ValueError(f"bad name {text!r}")
    return text


def _parse_text(text: str) -> str:
    text = text.strip()
    if not _TEXT_RE.match(text):
        raise ValueError(f"bad text value {text!r}")
    return text


_PARSERS: dict[str, Callable[[str], Any]] = {
    "float": _parse_float,
    "int": _parse_int,
    "vec": _parse_vec,
    "veclist": _parse_vec_list,
    "name": _parse_name,
    "text": _parse_text,
}


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_vec(v: Vec3) -> str:
    return "(" + ", ".join(_fmt_float(x) for x in v) + ")"


def _format_value(value: Any, kind: str) -> str:
    if kind == "float":
        return _fmt_float(value)
    if kind == "int":
        return str(int(value))
    if kind == "vec":
        return _fmt_vec(value)
    if kind == "veclist":
        return "; ".join(_fmt_vec(v) for v in value)
    return str(value)


def _coerce(value: Any, kind: str) -> Any:
    if isinstance(value, str):
        return _PARSERS[kind](value)
    if kind == "float":
        v = float(value)
        if not math.isfinite(v):
            raise ValueError("value must be finite")
        return v
    if kind == "int":
        if float(value) != int(value):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if kind == "vec":
        return tuple(float(x) for x in value)
    if kind == "veclist":
        return tuple(tuple(float(x) for x in v) for v in value)
    return str(value)


# ---------------------------------------------------------------------------
# section schemas

_SECTION_TYPES: dict[str, type] = {
    "atoms": AtomsSection,
    "laser": LaserSection,
    "trap": TrapSection,
    "drive": DriveBlock,
    "address": AddressBlock,
    "noise": NoiseSection,
}
_SECTION_NAMES = {v: k for k, v in _SECTION_TYPES.items()}
_REPEATED = {"drive", "address"}

_KEY_TYPES: dict[type, dict[str, str]] = {
    AtomsSection: {"positions_um": "veclist", "level": "text", "c6_mhz_um6": "float"},
    LaserSection: {
        "lambda_red_um": "float",
        "lambda_blue_um": "float",
        "geometry": "name",
        "axis": "vec",
    },
    TrapSection: {"waist_um": "float", "depth_mhz": "float", "axial_aspect": "float"},
    DriveBlock: {
        "name": "name",
        "t_start_us": "float",
        "duration_us": "float",
        "during": "name",
        "rabi_mhz": "float",
        "detuning_mhz": "float",
        "phase_rad": "float",
    },
    AddressBlock: {
        "name": "name",
        "t_start_us": "float",
        "duration_us": "float",
        "during": "name",
        "peak_shift_mhz": "float",
        "waist_um": "float",
        "center_um": "vec",
        "axis": "vec",
    },
    NoiseSection: {
        "temperature_uk": "float",
        "shots": "int",
        "eps_g_to_r": "float",
        "eps_r_to_g": "float",
        "prep_efficiency": "float",
        "rng_seed": "int",
    },
}

_REQUIRED: dict[type, tuple[str, ...]] = {
    AtomsSection: ("positions_um",),
    DriveBlock: ("rabi_mhz",),
    AddressBlock: ("peak_shift_mhz", "waist_um", "center_um"),
}


def _positive(x):
    return x > 0.0


def _nonneg(x):
    return x >= 0.0


def _prob(x):
    return 0.0 <= x <= 1.0


def _nonzero_vec(v):
    return any(c != 0.0 for c in v)


_CHECKS: dict[tuple[type, str], tuple[Callable[[Any], bool], str]] = {
    (AtomsSection, "c6_mhz_um6"): (lambda x: x != 0.0, "must be nonzero"),
    (LaserSection, "lambda_red_um"): (_positive, "must be > 0"),
    (LaserSection, "lambda_blue_um"): (_positive, "must be > 0"),
    (LaserSection, "geometry"): (lambda g: g in ("co", "counter"), "must be 'co' or 'counter'"),
    (LaserSection, "axis"): (_nonzero_vec, "must be nonzero"),
    (TrapSection, "waist_um"): (_positive, "must be > 0"),
    (TrapSection, "depth_mhz"): (_positive, "must be > 0"),
    (TrapSection, "axial_aspect"): (lambda x: x >= 1.0, "must be >= 1"),
    (DriveBlock, "rabi_mhz"): (_nonneg, "must be >= 0"),
    (AddressBlock, "peak_shift_mhz"): (_nonneg, "must be >= 0"),
    (AddressBlock, "waist_um"): (_positive, "must be > 0"),
    (AddressBlock, "axis"): (_nonzero_vec, "must be nonzero"),
    (NoiseSection, "temperature_uk"): (_nonneg, "must be >= 0"),
    (NoiseSection, "shots"): (lambda n: n >= 1, "must be >= 1"),
    (NoiseSection, "eps_g_to_r"): (_prob, "must lie in [0, 1]"),
    (NoiseSection, "eps_r_to_g"): (_prob, "must lie in [0, 1]"),
    (NoiseSection, "prep_efficiency"): (_prob, "must lie in [0, 1]"),
}
_TIME_KEYS = ("t_start_us", "duration_us")


def _check_key(cls: type, key: str, value: Any) -> None:
    if key in _TIME_KEYS and value is not None and value < 0.0:
        raise ScheduleError(f"{key} must be >= 0, got {value!r}")
    check = _CHECKS.get((cls, key))
    if check is not None and value is not None and not check[0](value):
        raise ValueError(f"{key} {check[1]}, got {value!r}")


# ---------------------------------------------------------------------------
# parameter paths


def _resolve(doc: ExperimentDocument, path: str) -> tuple[Any, str, list[str]]:
    parts = path.split(".")
    if len(parts) < 2:
        raise KeyError(f"bad parameter path {path!r}")
    section = parts[0]
    if section not in _SECTION_TYPES:
        raise KeyError(f"unknown section in path {path!r}")
    cls = _SECTION_TYPES[section]
    keys = _KEY_TYPES[cls]
    if section in _REPEATED:
        blocks = [b for b in doc.blocks if isinstance(b, cls)]
        if parts[1] in keys:
            if not blocks:
                raise KeyError(f"no [{section}] block for path {path!r}")
            obj, rest = blocks[0], parts[1:]
        else:
            named = [b for b in blocks if b.name == parts[1]]
            if not named or len(parts) < 3:
                raise KeyError(f"no [{section}] block named {parts[1]!r}")
            obj, rest = named[0], parts[2:]
    else:
        obj, rest = getattr(doc, section), parts[1:]
    attr = rest[0]
    if attr not in keys or attr in ("name", "during", "level", "geometry"):
        raise KeyError(f"{path!r} is not a numeric parameter")
    return obj, attr, rest[1:]


_COMPONENTS = {"x": 0, "y": 1, "z": 2}


def _get_component(value: Any, rest: list[str], path: str) -> Any:
    if not rest:
        return value
    if value is None:
        raise KeyError(f"{path!r} is unset")
    if isinstance(value, tuple) and value and isinstance(value[0], tuple):
        if len(rest) != 2 or not rest[0].isdigit() or int(rest[0]) >= len(value):
            raise KeyError(f"bad index in {path!r}")
        return _get_component(value[int(rest[0])], rest[1:], path)
    if isinstance(value, tuple) and len(rest) == 1 and rest[0] in _COMPONENTS:
        return value[_COMPONENTS[rest[0]]]
    raise KeyError(f"bad component in {path!r}")


def _set_component(old: Any, rest: list[str], comp: float, path: str) -> Any:
    if isinstance(old, tuple) and old and isinstance(old[0], tuple):
        i = int(rest[0])
        return old[:i] + (_set_component(old[i], rest[1:], comp, path),) + old[i + 1 :]
    j = _COMPONENTS[rest[0]]
    return old[:j] + (comp,) + old[j + 1 :]


def _replace_section(doc: ExperimentDocument, old: Any, new: Any) -> ExperimentDocument:
    if isinstance(old, (DriveBlock, AddressBlock)):
        blocks = tuple(new if b is old else b for b in doc.blocks)
        result = dataclasses.replace(doc, blocks=blocks)
    else:
        result = dataclasses.replace(doc, **{_SECTION_NAMES[type(old)]: new})
    _validate_schedule(result, {})
    return result


# ---------------------------------------------------------------------------
# parser


@dataclass
class _RawSection:
    name: str
    line: int
    column: int
    entries: dict[str, tuple[str, int, int]] = field(default_factory=dict)


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse(text: str, strict: bool = True) -> ExperimentDocument:
    """Parse ``.ryx`` text into a validated :class:`ExperimentDocument`.

    Raises :class:`ParseError`. With ``strict=False`` unknown keys become
    warnings stored on ``document.warnings``.
    """
    errors: list[Diagnostic] = []
    warnings: list[Diagnostic] = []
    sections: list[_RawSection] = []
    scan_entries: list[tuple[str, str, int, int]] = []
    current: _RawSection | None = None

    lines = text.splitlines()
    if not any(_strip_comment(ln).strip() for ln in lines):
        raise ParseError([Diagnostic(E_EMPTY, "document is empty", 1, 1)])

    for lineno, raw in enumerate(lines, start=1):
        body = _strip_comment(raw)
        stripped = body.strip()
        if not stripped:
            continue
        col = len(body) - len(body.lstrip()) + 1
        if stripped.startswith("["):
            m = re.fullmatch(r"\[\s*([A-Za-z_]+)\s*\]", stripped)
            if not m:
                errors.append(Diagnostic(E_SYNTAX, f"malformed section header {stripped!r}", lineno, col))
                current = None
                continue
            name = m.group(1)
            if name not in _SECTION_TYPES and name != "scan":
                errors.append(Diagnostic(E_SECTION, f"unknown section [{name}]", lineno, col))
                current = None
                continue
            if name not in _REPEATED and any(s.name == name for s in sections):
                errors.append(Diagnostic(
                    E_ATOMS if name == "atoms" else E_DUPLICATE,
                    f"section [{name}] appears more than once", lineno, col))
                current = None
                continue
            current = _RawSection(name, lineno, col)
            sections.append(current)
            continue
        if "=" not in stripped:
            errors.append(Diagnostic(E_SYNTAX, f"expected 'key = value', got {stripped!r}", lineno, col))
            continue
        key_part, value_part = body.split("=", 1)
        key = key_part.strip()
        value = value_part.strip()
        value_col = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not _KEY_RE.match(key):
            errors.append(Diagnostic(E_SYNTAX, f"bad key {key!r}", lineno, col))
            continue
        if current is None:
            if not errors or errors[-1].line != lineno:
                errors.append(Diagnostic(E_SYNTAX, f"key {key!r} outside any section", lineno, col))
            continue
        if not value:
            errors.append(Diagnostic(E_VALUE, f"missing value for {key!r}", lineno, value_col))
            continue
        if current.name == "scan":
            scan_entries.append((key, value, lineno, col))
            continue
        if key in current.entries:
            errors.append(Diagnostic(E_DUPLICATE, f"duplicate key {key!r}", lineno, col))
            continue
        current.entries[key] = (value, lineno, value_col)

    if errors:
        raise ParseError(errors)

    atoms_sections = [s for s in sections if s.name == "atoms"]
    if not atoms_sections:
        raise ParseError([Diagnostic(E_ATOMS, "missing [atoms] section", 1, 1)])

    built: dict[str, Any] = {}
    blocks: list[Block] = []
    block_lines: dict[str, tuple[int, int]] = {}
    counters = {"drive": 0, "address": 0}
    for sec in sections:
        if sec.name == "scan":
            continue
        cls = _SECTION_TYPES[sec.name]
        schema = _KEY_TYPES[cls]
        kwargs: dict[str, Any] = {}
        for key, (value, ln, vc) in sec.entries.items():
            if key not in schema:
                diag = Diagnostic(E_KEY, f"unknown key {key!r} in [{sec.name}]", ln, _key_column(lines[ln - 1]))
                if strict:
                    errors.append(diag)
                else:
                    warnings.append(dataclasses.replace(diag, severity="warning"))
                continue
            try:
                parsed = _PARSERS[schema[key]](value)
                _check_key(cls, key, parsed)
            except ScheduleError as exc:
                errors.append(Diagnostic(E_NEGATIVE, str(exc), ln, vc))
                continue
            except ValueError as exc:
                errors.append(Diagnostic(E_VALUE, f"{key}: {exc}", ln, vc))
                continue
            kwargs[key] = parsed
        missing = [k for k in _REQUIRED.get(cls, ()) if k not in kwargs and k not in _failed_keys(errors, sec)]
        for k in missing:
            errors.append(Diagnostic(E_MISSING, f"[{sec.name}] requires {k!r}", sec.line, sec.column))
        if missing or any(d.line >= sec.line and d.line <= _last_line(sec) for d in errors):
            continue
        if sec.name in _REPEATED:
            counters[sec.name] += 1
            kwargs.setdefault("name", f"{sec.name}{counters[sec.name]}")
            if kwargs["name"] in block_lines:
                errors.append(Diagnostic(E_DUPLICATE, f"block name {kwargs['name']!r} already used", sec.line, sec.column))
                continue
            timing_error = _timing_error(kwargs)
            if timing_error:
                errors.append(Diagnostic(E_MISSING, timing_error, sec.line, sec.column))
                continue
            if kwargs.get("during") is not None and kwargs["during"] not in block_lines:
                ln, vc = sec.entries["during"][1:]
                errors.append(Diagnostic(E_REF, f"'during' refers to unknown or later block {kwargs['during']!r}", ln, vc))
                continue
            blocks.append(cls(**kwargs))
            block_lines[kwargs["name"]] = (sec.line, sec.column)
        else:
            built[sec.name] = cls(**kwargs)

    if errors:
        raise ParseError(errors)

    atoms_sec = atoms_sections[0]
    atoms = built["atoms"]
    try:
        AtomGeometry(atoms.positions_um)
    except DomainError as exc:
        errors.append(Diagnostic(E_ATOMS, str(exc), *atoms_sec.entries["positions_um"][1:]))
    except ValueError as exc:
        errors.append(Diagnostic(E_ATOMS, str(exc), *atoms_sec.entries["positions_um"][1:]))
    if atoms.level not in LEVEL_PRESETS and atoms.c6_mhz_um6 is None:
        ln, vc = atoms_sec.entries["level"][1:] if "level" in atoms_sec.entries else (atoms_sec.line, atoms_sec.column)
        errors.append(Diagnostic(E_VALUE, f"unknown level {atoms.level!r}; give c6_mhz_um6", ln, vc))
    elif atoms.c6_mhz_um6 is None and LEVEL_PRESETS.get(atoms.level) is None:
        ln, vc = atoms_sec.entries["level"][1:] if "level" in atoms_sec.entries else (atoms_sec.line, atoms_sec.column)
        errors.append(Diagnostic(E_VALUE, f"level {atoms.level!r} has no preset C6; give c6_mhz_um6", ln, vc))

    doc = ExperimentDocument(
        atoms=atoms,
        laser=built.get("laser", LaserSection()),
        trap=built.get("trap", TrapSection()),
        blocks=tuple(blocks),
        noise=built.get("noise", NoiseSection()),
    )
    if not errors:
        _validate_schedule(doc, block_lines, errors)

    scan = None
    scan_sections = [s for s in sections if s.name == "scan"]
    if scan_sections and not errors:
        sec = scan_sections[0]
        if len(scan_entries) != 1:
            errors.append(Diagnostic(E_SCAN, "[scan] must hold exactly one 'path = start:stop:step' line", sec.line, sec.column))
        else:
            path, value, ln, col = scan_entries[0]
            try:
                scan = ScanSpec.parse(path, value)
                doc.get_value(path)
                doc.with_value(path, float(scan.start))
            except (KeyError, ValueError, IndexError) as exc:
                msg = exc.args[0] if exc.args else str(exc)
                errors.append(Diagnostic(E_SCAN, f"bad scan {path!r}: {msg}", ln, col))
    if errors:
        raise ParseError(errors)
    return dataclasses.replace(doc, scan=scan, warnings=tuple(warnings))


def _key_column(line: str) -> int:
    return len(line) - len(line.lstrip()) + 1


def _last_line(sec: _RawSection) -> int:
    return max([sec.line] + [ln for _, ln, _ in sec.entries.values()])


def _failed_keys(errors: list[Diagnostic], sec: _RawSection) -> set[str]:
    failed_lines = {d.line for d in errors}
    return {k for k, (_, ln, _) in sec.entries.items() if ln in failed_lines}


def _timing_error(kwargs: dict[str, Any]) -> str | None:
    if kwargs.get("during") is not None:
        if kwargs.get("t_start_us") is not None or kwargs.get("duration_us") is not None:
            return "'during' excludes t_start_us and duration_us"
        return None
    if kwargs.get("duration_us") is None:
        return f"block {kwargs['name']!r} requires duration_us or during"
    return None


def _validate_schedule(
    doc: ExperimentDocument,
    block_lines: dict[str, tuple[int, int]],
    errors: list[Diagnostic] | None = None,
) -> None:
    """Check that drive windows do not overlap. Raises ScheduleError when ``errors`` is None."""
    timing = doc.timings()
    spans = sorted(
        ((timing[b.name][0], timing[b.name][0] + timing[b.name][1], b.name) for b in doc.drives if timing[b.name][1] > 0),
        key=lambda s: s[0],
    )
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0 - 1e-12:
            msg = f"drive blocks {n0!r} and {n1!r} overlap"
            if errors is None:
                raise ScheduleError(msg)
            ln, col = block_lines.get(n1, (1, 1))
            errors.append(Diagnostic(E_OVERLAP, msg, ln, col))


def parse_file(path, strict: bool = True) -> ExperimentDocument:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), strict=strict)


# ---------------------------------------------------------------------------
# serializer


def _section_lines(obj: Any, header: str) -> list[str]:
    out = [f"[{header}]"]
    schema = _KEY_TYPES[type(obj)]
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if value is None:
            continue
        out.append(f"{f.name} = {_format_value(value, schema[f.name])}")
    return out


def serialize(doc: ExperimentDocument) -> str:
    """Full-precision text form; ``parse(serialize(d)) == d``."""
    chunks = [
        _section_lines(doc.atoms, "atoms"),
        _section_lines(doc.laser, "laser"),
        _section_lines(doc.trap, "trap"),
    ]
    for b in doc.blocks:
        chunks.append(_section_lines(b, _SECTION_NAMES[type(b)]))
    chunks.append(_section_lines(doc.noise, "noise"))
    if doc.scan is not None:
        chunks.append(["[scan]", f"{doc.scan.parameter} = {doc.scan.range_text()}"])
    return "\n\n".join("\n".join(c) for c in chunks) + "\n"
