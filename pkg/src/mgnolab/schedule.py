"""Traversal schedules for the multi-scale cycles.

A schedule is an ordered list of actions over scale levels 1..L (1 finest):
Down(l) moves state from level l to l+1, Up(l) from l+1 back to l, In(l)
transforms within level l. All three cycle types start and end at the finest
level and only ever move between adjacent levels.

The V cycle is one descent and ascent. The W cycle recurses with every
non-finest level repeating its descend/recurse/ascend/transform block twice.
The F cycle follows its recursive block with a plain V descent from the same
level. At two levels all three coincide, and F equals W at three levels;
the first structural difference appears at four levels.
"""

from __future__ import annotations

from dataclasses import dataclass

CYCLES = ("v", "f", "w")
ROLES = ("down", "in", "up")


@dataclass(frozen=True)
class Action:
    role: str   # "down" | "in" | "up"
    level: int  # 1-based; down(l): l -> l+1, up(l): l+1 -> l, in(l): at l
    visit: int = 0  # occurrence index of (role, level) within one cycle iteration

    def __repr__(self) -> str:
        return f"{self.role}({self.level})#{self.visit}"


def _v_block(level: int, coarsest: int) -> list[tuple[str, int]]:
    if level == coarsest:
        return [("in", level)]
    return [("down", level)] + _v_block(level + 1, coarsest) \
        + [("up", level), ("in", level)]


def _w_block(level: int, coarsest: int) -> list[tuple[str, int]]:
    if level == coarsest:
        return [("in", level)]
    once = [("down", level)] + _w_block(level + 1, coarsest) \
        + [("up", level), ("in", level)]
    return once if level == 1 else once * 2


def _f_block(level: int, coarsest: int) -> list[tuple[str, int]]:
    if level == coarsest:
        return [("in", level)]
    block = [("down", level)] + _f_block(level + 1, coarsest) \
        + [("up", level), ("in", level)]
    if level > 1:
        block += [("down", level)] + _v_block(level + 1, coarsest) \
            + [("up", level), ("in", level)]
    return block


def generate_schedule(cycle: str, n_scales: int) -> list[Action]:
    """One cycle iteration of the given type over n_scales levels."""
    cycle = cycle.lower()
    if cycle not in CYCLES:
        raise ValueError(f"cycle must be one of {CYCLES}, got {cycle!r}")
    if n_scales < 2:
        raise ValueError(f"multi-scale cycles need at least 2 scales, got {n_scales}")
    steps = {"v": _v_block, "f": _f_block, "w": _w_block}[cycle](1, n_scales)

    seen: dict[tuple[str, int], int] = {}
    actions = []
    for role, level in steps:
        visit = seen.get((role, level), 0)
        seen[(role, level)] = visit + 1
        actions.append(Action(role, level, visit))
    _check(actions, n_scales)
    return actions


def level_trace(schedule: list[Action]) -> list[int]:
    """Sequence of levels visited; starts at 1, changes on down/up only."""
    trace = [1]
    for a in schedule:
        if a.role == "down":
            trace.append(a.level + 1)
        elif a.role == "up":
            trace.append(a.level)
    return trace


def _check(actions: list[Action], n_scales: int) -> None:
    level = 1
    for a in actions:
        if a.role == "down":
            if a.level != level:
                raise AssertionError(f"down from level {a.level} while at {level}")
            level += 1
        elif a.role == "up":
            if a.level + 1 != level:
                raise AssertionError(f"up to level {a.level} while at {level}")
            level -= 1
        elif a.level != level:
            raise AssertionError(f"in at level {a.level} while at {level}")
        if not 1 <= level <= n_scales:
            raise AssertionError(f"left the level range at {level}")
    if level != 1:
        raise AssertionError(f"schedule ends at level {level}, not the finest")
