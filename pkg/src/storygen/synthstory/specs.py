"""Scene vocabulary: characters, backgrounds, actions and scene states."""

from __future__ import annotations

from dataclasses import dataclass


class SceneValidationError(ValueError):
    """A scene violates its structural constraints."""


@dataclass(frozen=True)
class CharacterSpec:
    name: str
    pronoun: str  # "he" or "she"
    shape: str  # "square", "circle" or "triangle"
    color: tuple[float, float, float]


@dataclass(frozen=True)
class BackgroundSpec:
    name: str
    texture_seed: int
    base_color: tuple[float, float, float]


# Sprite colors are kept far apart so template matching is unambiguous.
CHARACTERS: tuple[CharacterSpec, ...] = (
    CharacterSpec("Tony", "he", "square", (0.85, 0.12, 0.12)),
    CharacterSpec("Lisa", "she", "circle", (0.95, 0.80, 0.10)),
    CharacterSpec("Jhon", "he", "triangle", (0.15, 0.35, 0.90)),
)

BACKGROUNDS: tuple[BackgroundSpec, ...] = (
    BackgroundSpec("Planet", 101, (0.45, 0.25, 0.60)),
    BackgroundSpec("Snow", 102, (0.90, 0.93, 0.96)),
    BackgroundSpec("Sand", 103, (0.86, 0.76, 0.49)),
    BackgroundSpec("Dirt", 104, (0.47, 0.32, 0.18)),
    BackgroundSpec("Grass", 105, (0.22, 0.62, 0.22)),
    BackgroundSpec("Stone", 106, (0.52, 0.52, 0.55)),
)

# (third-person singular, plural) verb forms for the sentence templates.
ACTIONS: tuple[tuple[str, str], ...] = (
    ("stands", "stand"),
    ("walks", "walk"),
    ("jumps", "jump"),
    ("climbs", "climb"),
    ("collects a coin", "collect a coin"),
)

FRAME_SIZE = 32
GRID_CELLS = 3  # characters sit on a 3x3 placement grid
CELL_SIZE = 10
GRID_MARGIN = 1  # grid occupies pixels [1, 31)

CHARACTER_BY_NAME = {c.name: c for c in CHARACTERS}
BACKGROUND_BY_NAME = {b.name: b for b in BACKGROUNDS}
ACTION_SINGULAR = tuple(a[0] for a in ACTIONS)


@dataclass(frozen=True)
class SceneState:
    """One frame's content: who is present, where, and on what background."""

    characters: tuple[str, ...]  # character names, 1 or 2
    background: str
    positions: tuple[tuple[int, int], ...]  # (col, row) grid cell per character
    action: str  # singular verb form

    def validate(self) -> None:
        if not 0 <= len(self.characters) <= 2:
            raise SceneValidationError(
                f"scene must contain at most 2 characters, got {len(self.characters)}"
            )
        if len(self.positions) != len(self.characters):
            raise SceneValidationError("one position required per character")
        for name in self.characters:
            if name not in CHARACTER_BY_NAME:
                raise SceneValidationError(f"unknown character {name!r}")
        if self.background not in BACKGROUND_BY_NAME:
            raise SceneValidationError(f"unknown background {self.background!r}")
        for col, row in self.positions:
            if not (0 <= col < GRID_CELLS and 0 <= row < GRID_CELLS):
                raise SceneValidationError(
                    f"grid position ({col}, {row}) outside [0, {GRID_CELLS})"
                )
