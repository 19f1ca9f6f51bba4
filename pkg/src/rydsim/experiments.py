"""Turnkey recipes: addressing-beam spectroscopy, blockade Rabi oscillations
and dark-state phase oscillations, plus a generic scan runner.

All recipes accept ``ideal=True`` for exact, RNG-free populations with the
atoms at their trap centers, or ``ideal=False`` for the full Monte Carlo
noise model of the document's ``[noise]`` section.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .fitting import FitResult, LinearFit, ResonanceError, damped_sine, find_resonance, fit, gaussian_1e2, linear_fit
from .hilbert import PopulationTable, basis_labels, occupation_table
from .noise import apply_detection_channel, ideal_populations, run_monte_carlo
from .ryx import AddressBlock, DriveBlock, ExperimentDocument, ScanSpec, serialize


class ConfigError(ValueError):
    """The document does not fit the recipe (wrong atom count, missing block...)."""


def model_hash(document: ExperimentDocument) -> str:
    return hashlib.sha256(serialize(document).encode()).hexdigest()[:16]


def binomial_sigma(p: np.ndarray, shots: int) -> np.ndarray:
    """Binomial standard error with a (k+1)/(n+2) floor so it never vanishes."""
    p_tilde = (np.asarray(p) * shots + 1.0) / (shots + 2.0)
    return np.sqrt(p_tilde * (1.0 - p_tilde) / shots)


# ---------------------------------------------------------------------------
# result tables


@dataclass
class ResultTable:
    """Populations versus one scanned parameter."""

    parameter: str
    scan_values: np.ndarray
    atom_count: int
    populations: np.ndarray
    standard_errors: np.ndarray
    shots: np.ndarray
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def labels(self) -> tuple[str, ...]:
        return basis_labels(self.atom_count)

    @property
    def ideal(self) -> bool:
        return self.metadata.get("mode", "").startswith("ideal")

    def column(self, label: str) -> np.ndarray:
        return self.populations[:, self.labels.index(label)]

    def marginal(self, atom: int, level: str = "r") -> np.ndarray:
        occ = occupation_table(self.atom_count)[:, atom]
        mask = occ == (1 if level == "r" else 0)
        return self.populations[:, mask].sum(axis=1)

    @property
    def shot_count(self) -> int | None:
        return None if self.ideal else int(self.shots[0])

    def sigma(self, values: np.ndarray) -> np.ndarray | None:
        """Fit weights for an observable derived from this table (None if ideal)."""
        if self.ideal:
            return None
        return binomial_sigma(values, int(self.shots[0]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# rydsim {self.metadata.get('version', __version__)}\n")
        for key in ("mode", "seed", "model_hash", "scan_parameter"):
            if key in self.metadata:
                buf.write(f"# {key}={self.metadata[key]}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["scan_value"] + [f"P_{lab}" for lab in self.labels] + [f"se_{lab}" for lab in self.labels] + ["shots"]
        )
        for v, p, se, n in zip(self.scan_values, self.populations, self.standard_errors, self.shots):
            writer.writerow([repr(float(v))] + [repr(float(x)) for x in p] + [repr(float(x)) for x in se] + [str(int(n))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        meta: dict[str, str] = {}
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                content = line[1:].strip()
                if "=" in content:
                    k, v = content.split("=", 1)
                    meta[k.strip()] = v.strip()
                elif content.startswith("rydsim "):
                    meta["version"] = content.split(" ", 1)[1]
            elif line.strip():
                body.append(line)
        rows = list(csv.reader(body))
        header, data = rows[0], rows[1:]
        n_conf = sum(1 for h in header if h.startswith("P_"))
        atom_count = int(round(math.log2(n_conf)))
        arr = np.array([[float(x) for x in row] for row in data]).reshape(len(data), len(header))
        return cls(
            meta.get("scan_parameter", ""),
            arr[:, 0],
            atom_count,
            arr[:, 1 : 1 + n_conf],
            arr[:, 1 + n_conf : 1 + 2 * n_conf],
            arr[:, -1].astype(int),
            meta,
        )


def _metadata(document: ExperimentDocument, ideal: bool, parameter: str) -> dict[str, str]:
    return {
        "version": __version__,
        "mode": "ideal" if ideal else "sampled",
        "seed": "none" if ideal else str(document.noise.rng_seed),
        "model_hash": model_hash(document),
        "scan_parameter": parameter,
    }


def simulate_scan(
    document: ExperimentDocument,
    scan: ScanSpec | None = None,
    ideal: bool = True,
    workers: int = 1,
    stream_prefix: Sequence[int] = (),
) -> ResultTable:
    """Final-time populations for each value of a parameter scan.

    Scan point ``i`` draws its shots from the random stream keyed
    ``stream_prefix + (i,)``. Without a scan, one row at the document's own
    settings is produced (scan value = sequence duration).
    """
    scan = scan if scan is not None else document.scan
    if scan is None:
        values = np.array([document.sequence().duration])
        docs = [document]
        parameter = "duration_us"
    else:
        values = scan.values()
        docs = [document.with_value(scan.parameter, float(v)) for v in values]
        parameter = scan.parameter
    tables: list[PopulationTable] = []
    for i, doc in enumerate(docs):
        if ideal:
            tables.append(ideal_populations(doc)[0])
        else:
            tables.append(run_monte_carlo(doc, stream_key=tuple(stream_prefix) + (i,), workers=workers)[0])
    shots = np.array([t.shots or 0 for t in tables])
    return ResultTable(
        parameter,
        values,
        document.atom_count,
        np.array([t.probabilities for t in tables]),
        np.array([t.standard_errors for t in tables]),
        shots,
        _metadata(document, ideal, parameter),
    )


def apply_detection_to_table(table: ResultTable, eps_g_to_r: float, eps_r_to_g: float) -> ResultTable:
    """Push every row through the per-atom detection channel (table form)."""
    rows = [
        apply_detection_channel(PopulationTable(table.atom_count, p), eps_g_to_r, eps_r_to_g).probabilities
        for p in table.populations
    ]
    meta = dict(table.metadata, mode=table.metadata.get("mode", "ideal") + "+detection")
    return dataclasses.replace(table, populations=np.array(rows), metadata=meta)


# ---------------------------------------------------------------------------
# blockade Rabi oscillations


DEFAULT_RABI_SCAN = "0:2:0.02"


def _first_drive(document: ExperimentDocument) -> DriveBlock:
    if not document.drives:
        raise ConfigError("the document needs a [drive] block")
    return document.drives[0]


def _first_address(document: ExperimentDocument) -> AddressBlock:
    if not document.addresses:
        raise ConfigError("the document needs an [address] block")
    return document.addresses[0]


def blockade_document(document: ExperimentDocument, addressed: bool) -> ExperimentDocument:
    """One global drive from t = 0, with the addressing beam on during it if requested."""
    if document.atom_count < 2:
        raise ConfigError("the blockade experiment needs at least two atoms")
    drive = dataclasses.replace(_first_drive(document), t_start_us=0.0, during=None)
    if drive.duration_us is None:
        drive = dataclasses.replace(drive, duration_us=0.0)
    blocks: list = [drive]
    if addressed:
        beam = _first_address(document)
        blocks.append(dataclasses.replace(beam, t_start_us=None, duration_us=None, during=drive.name))
    return dataclasses.replace(document, blocks=tuple(blocks))


def experiment_blockade_rabi(
    document: ExperimentDocument,
    addressed: bool = False,
    ideal: bool = True,
    detection: bool = False,
    scan: ScanSpec | None = None,
    workers: int = 1,
) -> ResultTable:
    """Two-atom populations versus drive duration.

    ``detection=True`` post-processes ideal populations through the
    detection channel of the ``[noise]`` section (the "expected measured
    populations" construction); sampled runs always include the channel.
    """
    doc = blockade_document(document, addressed)
    if scan is None:
        scan = document.scan if document.scan is not None else ScanSpec.parse("drive.duration_us", DEFAULT_RABI_SCAN)
    table = simulate_scan(doc, scan, ideal=ideal, workers=workers)
    if detection and ideal:
        table = apply_detection_to_table(table, doc.noise.eps_g_to_r, doc.noise.eps_r_to_g)
    return table


def fit_oscillation(x, y, shots: int | None = None, free_gamma: bool = True, reweight: int = 3) -> FitResult:
    """Damped-sine fit A + B exp(-gamma x) cos(2 pi f x), cosine phase fixed to 0.

    Ideal data (``shots=None``) are fitted unweighted. Sampled frequencies are
    fitted with binomial weights whose variance p(1-p)/shots is taken from
    the current model curve and refined ``reweight`` times; weights taken
    from the data themselves would favour points that fluctuated toward 0
    or 1 and inflate the fitted amplitude.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fixed = None if free_gamma else {"gamma": 0.0}
    if shots is None:
        return fit(damped_sine, x, y, fixed=fixed)
    result = fit(damped_sine, x, y, binomial_sigma(y, shots), fixed=fixed)
    for _ in range(reweight):
        p = np.clip(damped_sine.func(x, result.values), 0.5 / shots, 1.0 - 0.5 / shots)
        result = fit(damped_sine, x, y, np.sqrt(p * (1.0 - p) / shots), p0=result.values, fixed=fixed)
    return result


def analyze_rabi(table: ResultTable, addressed: bool = False) -> FitResult:
    """Fit the oscillation of the singly-excited population (unaddressed) or
    of atom 0's Rydberg marginal (addressed)."""
    if addressed:
        y = table.marginal(0, "r")
    else:
        y = table.column("gr") + table.column("rg")
    return fit_oscillation(table.scan_values, y, table.shot_count)


# ---------------------------------------------------------------------------
# phase manipulation of the entangled state


@dataclass
class PhaseResult:
    shifts: np.ndarray
    tables: list[ResultTable]
    fits: list[FitResult]
    linear: LinearFit | None
    powers: np.ndarray | None = None

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([f["f"] for f in self.fits])

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# rydsim {__version__}\n")
        if self.linear is not None:
            lin = self.linear
            buf.write(f"# slope={lin.slope!r}\n# intercept={lin.intercept!r}\n")
            buf.write(f"# slope_error={lin.slope_error!r}\n# intercept_error={lin.intercept_error!r}\n")
        writer = csv.writer(buf, lineterminator="\n")
        names = self.fits[0].names if self.fits else ()
        writer.writerow(["shift_mhz", "power_mw"] + list(names) + [f"se_{n}" for n in names] + ["converged"])
        for i, (s, res) in enumerate(zip(self.shifts, self.fits)):
            power = repr(float(self.powers[i])) if self.powers is not None else ""
            writer.writerow(
                [repr(float(s)), power]
                + [repr(float(v)) for v in res.values]
                + [repr(float(e)) for e in res.errors]
                + [str(res.converged)]
            )
        return buf.getvalue()


def phase_document(document: ExperimentDocument) -> ExperimentDocument:
    if document.atom_count < 2:
        raise ConfigError("the phase experiment needs at least two atoms")
    if len(document.drives) < 2:
        raise ConfigError("the phase experiment needs excitation and de-excitation [drive] blocks")
    _first_address(document)
    return document


def experiment_phase_oscillation(
    document: ExperimentDocument,
    shifts: Sequence[float] | None = None,
    powers: Sequence[float] | None = None,
    kappa: float | None = None,
    ideal: bool = True,
    scan: ScanSpec | None = None,
    workers: int = 1,
) -> PhaseResult:
    """P_gg after excite / address for T / de-excite, for each light shift.

    Shifts come from ``shifts`` (MHz), from ``powers`` (mW) times the
    calibration ``kappa`` (MHz/mW), or default to the document's beam.
    Without an explicit scan, T runs over three periods in 61 steps.
    """
    doc = phase_document(document)
    beam = _first_address(doc)
    if powers is not None:
        if kappa is None:
            raise ConfigError("powers need a kappa calibration (MHz per mW)")
        shifts = [kappa * p for p in powers]
    if shifts is None:
        shifts = [beam.peak_shift_mhz]
    shifts = np.asarray(shifts, dtype=float)
    if scan is None and doc.scan is not None and doc.scan.parameter.startswith("address"):
        scan = doc.scan
    shift_path = f"address.{beam.name}.peak_shift_mhz"
    duration_path = f"address.{beam.name}.duration_us"

    tables, fits = [], []
    for j, shift in enumerate(shifts):
        d = doc.with_value(shift_path, float(shift))
        s = scan
        if s is None:
            if shift <= 0.0:
                raise ConfigError("default scan needs a positive light shift")
            s = ScanSpec(duration_path, 0.0, 3.0 / shift, 0.05 / shift)
        table = simulate_scan(d, s, ideal=ideal, workers=workers, stream_prefix=(j,))
        y = table.column("g" * doc.atom_count)
        tables.append(table)
        fits.append(fit_oscillation(table.scan_values, y, table.shot_count))

    linear = None
    if len(shifts) >= 2:
        xs = np.asarray(powers, dtype=float) if powers is not None else shifts
        f_err = np.array([f.error("f") for f in fits])
        # weight by the per-shift uncertainties when all are informative; with
        # only two shifts an unweighted line has no residual to scale from
        sigma = f_err if np.all(f_err > 0) else None
        linear = linear_fit(xs, [f["f"] for f in fits], sigma)
    return PhaseResult(shifts, tables, fits, linear, None if powers is None else np.asarray(powers, float))


# ---------------------------------------------------------------------------
# addressing-beam spectroscopy


@dataclass
class SpectroscopyResult:
    displacements: np.ndarray
    shifts: np.ndarray
    shift_errors: np.ndarray
    fit: FitResult
    metadata: dict[str, str] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# rydsim {__version__}\n")
        for key in ("mode", "seed", "model_hash", "scan_parameter"):
            if key in self.metadata:
                buf.write(f"# {key}={self.metadata[key]}\n")
        for name, v, e in zip(self.fit.names, self.fit.values, self.fit.errors):
            buf.write(f"# fit_{name}={float(v)!r} +- {float(e)!r}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scan_value", "shift_mhz", "se_shift_mhz"])
        for x, s, e in zip(self.displacements, self.shifts, self.shift_errors):
            writer.writerow([repr(float(x)), repr(float(s)), repr(float(e))])
        return buf.getvalue()

    @property
    def waist(self) -> float:
        return abs(self.fit["w"])


DEFAULT_DISPLACEMENT_SCAN = "-3:3:0.25"


def spectroscopy_document(document: ExperimentDocument) -> ExperimentDocument:
    if document.atom_count != 1:
        raise ConfigError("spectroscopy needs exactly one atom")
    drive = dataclasses.replace(_first_drive(document), t_start_us=0.0, during=None)
    if not drive.duration_us:
        raise ConfigError("the spectroscopy drive needs a positive duration_us")
    beam = dataclasses.replace(_first_address(document), t_start_us=None, duration_us=None, during=drive.name)
    return dataclasses.replace(document, blocks=(drive, beam))


def experiment_spectroscopy(
    document: ExperimentDocument,
    ideal: bool = True,
    displacements: ScanSpec | None = None,
    detunings: ScanSpec | None = None,
    workers: int = 1,
) -> SpectroscopyResult:
    """Light shift versus beam displacement, from resonance scans.

    For each displacement a detuning scan of the (single-atom) drive is
    fitted for its line center delta0; with the detuning convention
    delta_eff = delta - shift, the resonance sits at delta0 = +shift, so the
    reported shift is delta0 itself. A 1/e^2 Gaussian is fitted to shift
    versus displacement.
    """
    doc = spectroscopy_document(document)
    drive = doc.drives[0]
    beam = doc.addresses[0]
    if displacements is None:
        if document.scan is not None and document.scan.parameter.startswith("address"):
            displacements = document.scan
        else:
            displacements = ScanSpec.parse("address.center_um.x", DEFAULT_DISPLACEMENT_SCAN)
    if detunings is None:
        detunings = ScanSpec("drive.detuning_mhz", -4.0, beam.peak_shift_mhz + 4.0, 0.05)
    xs = displacements.values()
    shifts, errs = [], []
    for i, x in enumerate(xs):
        d = doc.with_value(displacements.parameter, float(x))
        table = simulate_scan(d, detunings, ideal=ideal, workers=workers, stream_prefix=(i,))
        p_r = table.marginal(0, "r")
        try:
            center, err = find_resonance(table.scan_values, p_r, drive.duration_us, table.sigma(p_r))
        except ResonanceError as exc:
            raise ResonanceError(f"{exc} at {displacements.parameter} = {x!r}") from exc
        shifts.append(center)
        errs.append(err)
    shifts_arr = np.array(shifts)
    errs_arr = np.array(errs)
    sigma = None if ideal else np.maximum(errs_arr, 1e-6)
    gfit = fit(gaussian_1e2, xs, shifts_arr, sigma)
    meta = _metadata(doc, ideal, displacements.parameter)
    return SpectroscopyResult(xs, shifts_arr, errs_arr, gfit, meta)


# ---------------------------------------------------------------------------
# fit CSV


def fit_to_csv(result: FitResult) -> str:
    buf = io.StringIO()
    buf.write(f"# rydsim {__version__}\n# model={result.model}\n")
    buf.write(f"# rss={result.rss!r}\n# converged={result.converged}\n# iterations={result.iterations}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "value", "uncertainty"])
    for n, v, e in zip(result.names, result.values, result.errors):
        writer.writerow([n, repr(float(v)), repr(float(e))])
    return buf.getvalue()


def fit_from_csv(text: str) -> FitResult:
    meta: dict[str, str] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            content = line[1:].strip()
            if "=" in content:
                k, v = content.split("=", 1)
                meta[k] = v
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))[1:]
    return FitResult(
        meta.get("model", ""),
        tuple(r[0] for r in rows),
        np.array([float(r[1]) for r in rows]),
        np.array([float(r[2]) for r in rows]),
        float(meta.get("rss", "nan")),
        meta.get("converged") == "True",
        int(meta.get("iterations", "0")),
    )
