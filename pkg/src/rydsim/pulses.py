"""Piecewise-constant pulse schedules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

from .model import AddressingBeam, GlobalDrive

TIME_EPS = 1e-12


class ScheduleError(ValueError):
    """Invalid schedule: overlapping drives, negative times, bad sample times."""


@dataclass(frozen=True)
class DriveItem:
    t_start: float
    duration: float
    drive: GlobalDrive
    name: str = ""

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration


@dataclass(frozen=True)
class AddressItem:
    t_start: float
    duration: float
    beam: AddressingBeam
    name: str = ""

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration


Item = Union[DriveItem, AddressItem]


@dataclass(frozen=True)
class PulseSequence:
    """Validated schedule; items are kept sorted by start time (stable)."""

    items: tuple[Item, ...] = ()

    def __post_init__(self) -> None:
        items = tuple(sorted(self.items, key=lambda it: it.t_start))
        object.__setattr__(self, "items", items)
        for it in items:
            if it.t_start < 0.0:
                raise ScheduleError(f"{it.name or 'item'} starts at negative time {it.t_start}")
            if not it.duration > 0.0:
                raise ScheduleError(f"{it.name or 'item'} has non-positive duration {it.duration}")
        drives = self.drives
        for a, b in zip(drives, drives[1:]):
            if b.t_start < a.t_end - TIME_EPS:
                raise ScheduleError(f"drives {a.name!r} and {b.name!r} overlap")

    @classmethod
    def of(cls, items: Iterable[Item]) -> "PulseSequence":
        return cls(tuple(items))

    @property
    def drives(self) -> tuple[DriveItem, ...]:
        return tuple(it for it in self.items if isinstance(it, DriveItem))

    @property
    def addresses(self) -> tuple[AddressItem, ...]:
        return tuple(it for it in self.items if isinstance(it, AddressItem))

    @property
    def duration(self) -> float:
        return max((it.t_end for it in self.items), default=0.0)

    def boundaries(self) -> list[float]:
        times = {0.0}
        for it in self.items:
            times.add(it.t_start)
            times.add(it.t_end)
        return sorted(times)

    def active_at(self, t_mid: float) -> tuple[list[GlobalDrive], list[AddressingBeam]]:
        """Drives and beams switched on at an instant strictly inside a segment."""
        drives = [it.drive for it in self.drives if it.t_start < t_mid < it.t_end]
        beams = [it.beam for it in self.addresses if it.t_start < t_mid < it.t_end]
        return drives, beams
