"""Replicated data types with deterministic concurrent-update semantics.

All types are state-based joins over grow-only metadata (unique dots per
event), so merge is commutative, associative, and idempotent by
construction.  The simulator applies recorded operations under causal
delivery; merge() is the whole-state join used for convergence checks and
snapshots.

Elements are tuples of strings (ground predicate arguments), which keeps
the canonical JSON encoding and the deterministic orderings total.
"""

from __future__ import annotations

from dataclasses import dataclass, field

Element = tuple[str, ...]


@dataclass(frozen=True, order=True)
class Dot:
    """Unique event identifier: one per update per origin replica."""

    replica: str
    seq: int

    def to_json(self) -> list:
        return [self.replica, self.seq]

    @staticmethod
    def from_json(data) -> "Dot":
        return Dot(data[0], int(data[1]))


class VectorClock:
    """Per-replica event counts; covers(dot) means the dot's event and its
    causal past are included (positions are delivered contiguously)."""

    __slots__ = ("entries",)

    def __init__(self, entries: dict[str, int] | None = None):
        self.entries = dict(entries or {})

    def copy(self) -> "VectorClock":
        return VectorClock(self.entries)

    def covers(self, dot: Dot) -> bool:
        return self.entries.get(dot.replica, 0) >= dot.seq

    def dominates(self, other: "VectorClock") -> bool:
        return all(self.entries.get(r, 0) >= n for r, n in other.entries.items())

    def advance(self, dot: Dot) -> None:
        self.entries[dot.replica] = max(self.entries.get(dot.replica, 0), dot.seq)

    def merge(self, other: "VectorClock") -> None:
        for r, n in other.entries.items():
            if n > self.entries.get(r, 0):
                self.entries[r] = n

    def __eq__(self, other) -> bool:
        if not isinstance(other, VectorClock):
            return NotImplemented
        return {r: n for r, n in self.entries.items() if n} == {
            r: n for r, n in other.entries.items() if n
        }

    def __repr__(self) -> str:
        inner = ", ".join(f"{r}:{n}" for r, n in sorted(self.entries.items()))
        return f"VC({inner})"

    def to_json(self) -> dict:
        return {r: n for r, n in sorted(self.entries.items()) if n}

    @staticmethod
    def from_json(data) -> "VectorClock":
        return VectorClock({r: int(n) for r, n in data.items()})


class ObjectMismatch(Exception):
    pass


class StaleDot(Exception):
    pass


# ---------------------------------------------------------------------------
# Add-wins set
# ---------------------------------------------------------------------------


class AwSet:
    """Observed-remove set where a concurrent add survives a remove.

    Adds create unique tags; removes tombstone only the tags they observed,
    so an unobserved (concurrent) add keeps the element alive.  Payloads
    are last-writer-wins by dot and are retained after removal until
    garbage collection, which lets touch() re-establish membership without
    writing payload bytes.
    """

    kind = "aw"

    def __init__(self, name: str = ""):
        self.name = name
        self.tags: dict[Element, set[Dot]] = {}
        self.tombstones: set[Dot] = set()
        self.payload: dict[Element, tuple[object, Dot]] = {}

    # -- updates (recorded at origin, replayed at every replica) -----------

    def add(self, element: Element, dot: Dot, payload: object = None) -> None:
        tags = self.tags.setdefault(element, set())
        if dot in tags:
            raise StaleDot(f"dot {dot} reused for {element}")
        tags.add(dot)
        current = self.payload.get(element)
        if current is None or (dot.seq, dot.replica) > (current[1].seq, current[1].replica):
            self.payload[element] = (payload, dot)

    def touch(self, element: Element, dot: Dot) -> None:
        """Membership like add, payload bytes untouched (a retained payload
        from before a removal becomes visible again)."""
        tags = self.tags.setdefault(element, set())
        if dot in tags:
            raise StaleDot(f"dot {dot} reused for {element}")
        tags.add(dot)

    def remove(self, element: Element, observed: set[Dot]) -> None:
        self.tombstones |= observed

    def observed_dots(self, element: Element) -> set[Dot]:
        return {d for d in self.tags.get(element, ()) if d not in self.tombstones}

    # -- queries -------------------------------------------------------------

    def contains(self, element: Element) -> bool:
        return bool(self.observed_dots(element))

    def value(self) -> set[Element]:
        return {e for e in self.tags if self.contains(e)}

    def payload_of(self, element: Element):
        entry = self.payload.get(element)
        return entry[0] if entry else None

    # -- join ------------------------------------------------------------------

    def merge(self, other: "AwSet") -> None:
        if other.name != self.name:
            raise ObjectMismatch(f"{self.name} vs {other.name}")
        for element, dots in other.tags.items():
            self.tags.setdefault(element, set()).update(dots)
        self.tombstones |= other.tombstones
        for element, (value, dot) in other.payload.items():
            current = self.payload.get(element)
            if current is None or (dot.seq, dot.replica) > (current[1].seq, current[1].replica):
                self.payload[element] = (value, dot)

    def gc(self, horizon: VectorClock) -> None:
        """Drop tombstoned tags (and orphaned payloads) once every replica
        has seen both the add and its removal."""
        for element in list(self.tags):
            tags = self.tags[element]
            dead = {d for d in tags if d in self.tombstones and horizon.covers(d)}
            tags -= dead
            self.tombstones -= dead
            if not tags:
                del self.tags[element]
                self.payload.pop(element, None)

    def copy(self) -> "AwSet":
        new = AwSet(self.name)
        new.tags = {e: set(d) for e, d in self.tags.items()}
        new.tombstones = set(self.tombstones)
        new.payload = dict(self.payload)
        return new

    def to_json(self) -> dict:
        return {
            "type": "aw-set",
            "name": self.name,
            "entries": [
                {
                    "element": list(e),
                    "tags": sorted(d.to_json() for d in dots),
                }
                for e, dots in sorted(self.tags.items())
            ],
            "tombstones": sorted(d.to_json() for d in self.tombstones),
            "payload": [
                {"element": list(e), "value": v, "dot": d.to_json()}
                for e, (v, d) in sorted(self.payload.items())
            ],
        }

    @staticmethod
    def from_json(data) -> "AwSet":
        s = AwSet(data["name"])
        for entry in data["entries"]:
            s.tags[tuple(entry["element"])] = {Dot.from_json(d) for d in entry["tags"]}
        s.tombstones = {Dot.from_json(d) for d in data["tombstones"]}
        for entry in data["payload"]:
            s.payload[tuple(entry["element"])] = (entry["value"], Dot.from_json(entry["dot"]))
        return s


# ---------------------------------------------------------------------------
# Remove-wins set with wildcard removes
# ---------------------------------------------------------------------------

Pattern = tuple[str | None, ...]  # None matches any value at that position


def pattern_matches(pattern: Pattern, element: Element) -> bool:
    return len(pattern) == len(element) and all(
        p is None or p == v for p, v in zip(pattern, element)
    )


def _pattern_covers(wide: Pattern, narrow: Pattern) -> bool:
    return len(wide) == len(narrow) and all(
        w is None or w == n for w, n in zip(wide, narrow)
    )


@dataclass(frozen=True)
class Barrier:
    """A remove: masks every matching tag not causally after it."""

    dot: Dot
    pattern: Pattern
    context: "VectorClock" = field(compare=False)

    def to_json(self) -> dict:
        return {
            "dot": self.dot.to_json(),
            "pattern": [p if p is not None else "*" for p in self.pattern],
            "context": self.context.to_json(),
        }

    @staticmethod
    def from_json(data) -> "Barrier":
        return Barrier(
            Dot.from_json(data["dot"]),
            tuple(None if p == "*" else p for p in data["pattern"]),
            VectorClock.from_json(data["context"]),
        )


class RwSet:
    """Remove-wins set: a concurrent remove masks an add, and a remove may
    carry a pattern that applies to every matching element.

    Each tag records the causal context of its add; a tag survives a
    matching barrier only when the add had already seen the barrier's dot
    (hence was issued causally after the remove).
    """

    kind = "rw"

    def __init__(self, name: str = ""):
        self.name = name
        self.tags: dict[Element, dict[Dot, VectorClock]] = {}
        self.barriers: list[Barrier] = []

    def add(self, element: Element, dot: Dot, context: VectorClock) -> None:
        entry = self.tags.setdefault(element, {})
        if dot in entry:
            raise StaleDot(f"dot {dot} reused for {element}")
        entry[dot] = context.copy()

    def remove_matching(self, pattern: Pattern, dot: Dot, context: VectorClock) -> None:
        self.barriers.append(Barrier(dot, pattern, context.copy()))
        self._compact()

    def contains(self, element: Element) -> bool:
        for dot, ctx in self.tags.get(element, {}).items():
            if all(
                not pattern_matches(b.pattern, element) or ctx.covers(b.dot)
                for b in self.barriers
            ):
                return True
        return False

    def value(self) -> set[Element]:
        return {e for e in self.tags if self.contains(e)}

    def merge(self, other: "RwSet") -> None:
        if other.name != self.name:
            raise ObjectMismatch(f"{self.name} vs {other.name}")
        for element, dots in other.tags.items():
            entry = self.tags.setdefault(element, {})
            for dot, ctx in dots.items():
                entry.setdefault(dot, ctx.copy())
        known = {b.dot for b in self.barriers}
        for b in other.barriers:
            if b.dot not in known:
                self.barriers.append(b)
        self._compact()

    def _compact(self) -> None:
        """Drop barriers subsumed by a causally later, at-least-as-wide one.
        Under causal delivery any add that saw the later barrier saw the
        earlier one too, so masking is unchanged."""
        keep: list[Barrier] = []
        for b in self.barriers:
            if any(
                o.dot != b.dot
                and _pattern_covers(o.pattern, b.pattern)
                and o.context.covers(b.dot)
                for o in self.barriers
            ):
                continue
            keep.append(b)
        self.barriers = sorted(keep, key=lambda b: (b.dot.replica, b.dot.seq))

    def copy(self) -> "RwSet":
        new = RwSet(self.name)
        new.tags = {e: {d: c.copy() for d, c in dots.items()} for e, dots in self.tags.items()}
        new.barriers = list(self.barriers)
        return new

    def to_json(self) -> dict:
        return {
            "type": "rw-set",
            "name": self.name,
            "entries": [
                {
                    "element": list(e),
                    "tags": [
                        {"dot": d.to_json(), "context": c.to_json()}
                        for d, c in sorted(dots.items())
                    ],
                }
                for e, dots in sorted(self.tags.items())
            ],
            "barriers": [b.to_json() for b in self.barriers],
        }

    @staticmethod
    def from_json(data) -> "RwSet":
        s = RwSet(data["name"])
        for entry in data["entries"]:
            s.tags[tuple(entry["element"])] = {
                Dot.from_json(t["dot"]): VectorClock.from_json(t["context"])
                for t in entry["tags"]
            }
        s.barriers = [Barrier.from_json(b) for b in data["barriers"]]
        return s


# ---------------------------------------------------------------------------
# Counter
# ---------------------------------------------------------------------------


class PnCounter:
    """Increment/decrement counter: per-replica monotone totals."""

    kind = "counter"

    def __init__(self, name: str = ""):
        self.name = name
        self.incs: dict[str, int] = {}
        self.decs: dict[str, int] = {}

    def apply(self, replica: str, delta: int) -> None:
        if delta >= 0:
            self.incs[replica] = self.incs.get(replica, 0) + delta
        else:
            self.decs[replica] = self.decs.get(replica, 0) - delta

    def value(self) -> int:
        return sum(self.incs.values()) - sum(self.decs.values())

    def merge(self, other: "PnCounter") -> None:
        if other.name != self.name:
            raise ObjectMismatch(f"{self.name} vs {other.name}")
        for r, n in other.incs.items():
            self.incs[r] = max(self.incs.get(r, 0), n)
        for r, n in other.decs.items():
            self.decs[r] = max(self.decs.get(r, 0), n)

    def copy(self) -> "PnCounter":
        new = PnCounter(self.name)
        new.incs = dict(self.incs)
        new.decs = dict(self.decs)
        return new

    def to_json(self) -> dict:
        return {
            "type": "pn-counter",
            "name": self.name,
            "incs": dict(sorted(self.incs.items())),
            "decs": dict(sorted(self.decs.items())),
        }

    @staticmethod
    def from_json(data) -> "PnCounter":
        c = PnCounter(data["name"])
        c.incs = {r: int(n) for r, n in data["incs"].items()}
        c.decs = {r: int(n) for r, n in data["decs"].items()}
        return c


# ---------------------------------------------------------------------------
# Compensation set
# ---------------------------------------------------------------------------


def trim_excess(members: set[Element], bound: int) -> tuple[list[Element], list[Element]]:
    """Deterministic split into (visible, trimmed): the lexicographically
    greatest members are trimmed first until the bound holds."""
    ordered = sorted(members)
    if len(ordered) <= bound:
        return ordered, []
    keep = max(bound, 0)
    return ordered[:keep], ordered[keep:]


class CompensationSet:
    """An add-wins set that enforces a maximum size on reads.

    Reads never expose more than `bound` elements; when the underlying set
    exceeds it, the read also returns the remove effects realizing the trim
    so the caller can commit them as a normal update.  Trim choice is
    deterministic, so replicas observing the same overflow emit the same
    compensation and converge.
    """

    kind = "compensation"

    def __init__(self, name: str = "", bound: int = 0):
        self.name = name
        self.bound = bound
        self.inner = AwSet(name)

    def add(self, element: Element, dot: Dot, payload: object = None) -> None:
        self.inner.add(element, dot, payload)

    def touch(self, element: Element, dot: Dot) -> None:
        self.inner.touch(element, dot)

    def remove(self, element: Element, observed: set[Dot]) -> None:
        self.inner.remove(element, observed)

    def read(self) -> tuple[list[Element], list[tuple[Element, set[Dot]]]]:
        """Visible elements plus the pending remove effects, if any."""
        visible, trimmed = trim_excess(self.inner.value(), self.bound)
        pending = [(e, self.inner.observed_dots(e)) for e in trimmed]
        return visible, pending

    def contains(self, element: Element) -> bool:
        visible, _ = self.read()
        return element in visible

    def value(self) -> set[Element]:
        return set(self.read()[0])

    def merge(self, other: "CompensationSet") -> None:
        if other.name != self.name or other.bound != self.bound:
            raise ObjectMismatch(f"{self.name}/{self.bound} vs {other.name}/{other.bound}")
        self.inner.merge(other.inner)

    def copy(self) -> "CompensationSet":
        new = CompensationSet(self.name, self.bound)
        new.inner = self.inner.copy()
        return new

    def to_json(self) -> dict:
        return {
            "type": "compensation-set",
            "name": self.name,
            "bound": self.bound,
            "inner": self.inner.to_json(),
        }

    @staticmethod
    def from_json(data) -> "CompensationSet":
        s = CompensationSet(data["name"], int(data["bound"]))
        s.inner = AwSet.from_json(data["inner"])
        return s
