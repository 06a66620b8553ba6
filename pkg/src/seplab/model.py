"""Generic nondeterministic state-machine security model.

A model instance bundles a finite event universe, a total successor
function, per-event executing domains, an interference policy over
domains, and a per-domain state equivalence ("view").  Both kernel
levels, the covert-channel variants, and the random micro-models all
plug into the same instance type, so every checker in this package is
written once against it.

Domains are small ints: 0 is the scheduler, 1 is the transmitter, and
2+k is partition k.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

SCHEDULER = 0
TRANSMITTER = 1


def partition_domain(part_id: int) -> int:
    return 2 + part_id


DEFAULT_STATE_BUDGET = 2_000_000
DEFAULT_PAIR_BUDGET = 10_000_000

# sources/ipurge recursion guard (also the largest sequence length the
# bounded property search will accept).
DEFAULT_MAX_SEQ_LEN = 6


class SeplabError(Exception):
    pass


class StateBudgetExceeded(SeplabError):
    def __init__(self, budget):
        super().__init__(f"reachable closure exceeded the state budget ({budget})")
        self.budget = budget


class PairBudgetExceeded(SeplabError):
    def __init__(self, budget):
        super().__init__(f"state-pair enumeration exceeded the pair budget ({budget})")
        self.budget = budget


class BoundTooLarge(SeplabError):
    def __init__(self, msg):
        super().__init__(msg)


class ModelValidityError(SeplabError):
    pass


class ModelInstance:
    """A concrete security-model instance.

    step(event, state) must return a nonempty tuple of successor states
    in a canonical order for every reachable state (totality).  vpeq
    must be an equivalence per domain; models that can afford it supply
    ``view_key`` so the checkers can build equivalence-class ids in one
    linear pass (vpeq then means "equal view keys").
    """

    def __init__(self, name, s0, events, domains, step, dom, interferes,
                 vpeq=None, view_key=None, domain_names=None, dom_profile=None,
                 cur_of=None, step_compiled=None):
        if view_key is None and vpeq is None:
            raise ValueError("a model needs vpeq or view_key")
        self.name = name
        self.s0 = s0
        self.events = tuple(events)
        self.event_index = {e: i for i, e in enumerate(self.events)}
        self.domains = tuple(domains)
        self.step = step
        # optional list of per-event closures aligned with events; the
        # search loops use it to skip the event lookup on every call
        if step_compiled is None:
            step_compiled = [
                (lambda s, e=e: step(e, s)) for e in self.events]
        self.step_compiled = step_compiled
        self.dom = dom
        self.interferes = interferes
        self.view_key = view_key
        if vpeq is None:
            vpeq = lambda s, d, t: view_key(d, s) == view_key(d, t)
        self.vpeq = vpeq
        self.domain_names = dict(domain_names or {})
        for d in self.domains:
            self.domain_names.setdefault(
                d, {SCHEDULER: "S", TRANSMITTER: "T"}.get(d, f"P{d - 2}"))
        # dom_profile(e) -> ("const", d) | ("cur",) lets the checkers
        # vectorise kdom without one call per (state, event); cur_of
        # extracts the current domain from a state.  Optional: generic
        # models fall back to per-state dom calls.
        self.dom_profile = dom_profile
        self.cur_of = cur_of

    @property
    def partitions(self):
        return tuple(d for d in self.domains if d >= 2)

    def domain_name(self, d):
        return self.domain_names[d]


def execution(model: ModelInstance, s, es) -> frozenset:
    """Final states of running the event sequence es from s."""
    frontier = {s}
    for e in es:
        nxt = set()
        for u in frontier:
            succ = model.step(e, u)
            if not succ:
                raise ModelValidityError(
                    f"{model.name}: event {e!r} has no successor (totality violated)")
            nxt.update(succ)
        frontier = nxt
    return frozenset(frontier)


class _SuccTable:
    """Per-event successor table over state indices.

    Deterministic events store a single int32 target row; branching
    events store CSR offsets + targets.
    """

    __slots__ = ("det", "targets", "offsets")

    def __init__(self, det, targets, offsets=None):
        self.det = det
        self.targets = targets
        self.offsets = offsets

    def successors(self, idx):
        if self.det:
            return (int(self.targets[idx]),)
        lo, hi = self.offsets[idx], self.offsets[idx + 1]
        return tuple(int(t) for t in self.targets[lo:hi])

    def branching(self):
        return not self.det


@dataclass
class ReachableSpace:
    """BFS closure of a model from s0.

    states[i] is the i-th discovered state (s0 first); index maps a
    state back to its id.  Successor tables plus (parent, parent_event)
    give every state a replayable path from s0.
    """

    model: ModelInstance
    states: list
    index: dict
    tables: list
    parent: np.ndarray
    parent_event: np.ndarray

    def __post_init__(self):
        self._analysis = None

    @property
    def size(self):
        return len(self.states)

    def successors(self, state_idx: int, event) -> tuple:
        e_idx = event if isinstance(event, int) else self.model.event_index[event]
        return self.tables[e_idx].successors(state_idx)

    def path_to(self, state_idx: int) -> tuple:
        """Event path from s0 whose execution contains states[state_idx]."""
        evs = []
        i = state_idx
        while i != 0:
            evs.append(self.model.events[int(self.parent_event[i])])
            i = int(self.parent[i])
        return tuple(reversed(evs))

    def analysis(self):
        if self._analysis is None:
            self._analysis = SpaceAnalysis(self)
        return self._analysis


def reachable_space(model: ModelInstance,
                    state_budget: int = DEFAULT_STATE_BUDGET) -> ReachableSpace:
    """Breadth-first closure of the model's step relation from s0."""
    states = [model.s0]
    index = {model.s0: 0}
    n_events = len(model.events)
    # per-event growing successor storage; switch det -> csr lazily
    det_rows = [[] for _ in range(n_events)]
    multi = [None] * n_events  # e_idx -> dict idx -> tuple when branching
    parent = [0]
    parent_event = [0]
    queue = deque((0,))
    steps = model.step_compiled
    events = model.events
    while queue:
        i = queue.popleft()
        s = states[i]
        for e_idx in range(n_events):
            succ = steps[e_idx](s)
            if not succ:
                raise ModelValidityError(
                    f"{model.name}: event {events[e_idx]!r} disabled in a reachable "
                    "state (assumption 6)")
            ids = []
            for t in succ:
                j = index.get(t)
                if j is None:
                    j = len(states)
                    if j >= state_budget:
                        raise StateBudgetExceeded(state_budget)
                    index[t] = j
                    states.append(t)
                    parent.append(i)
                    parent_event.append(e_idx)
                    queue.append(j)
                ids.append(j)
            if len(ids) == 1:
                det_rows[e_idx].append(ids[0])
                if multi[e_idx] is not None:
                    pass
            else:
                # dedupe, keep canonical (first-occurrence) order
                seen = set()
                uniq = tuple(j for j in ids if not (j in seen or seen.add(j)))
                if multi[e_idx] is None:
                    multi[e_idx] = {}
                multi[e_idx][i] = uniq
                det_rows[e_idx].append(-1)
    n = len(states)
    tables = []
    for e_idx in range(n_events):
        row = np.asarray(det_rows[e_idx], dtype=np.int64)
        if multi[e_idx] is None:
            tables.append(_SuccTable(True, row.astype(np.int32)))
        else:
            offsets = np.zeros(n + 1, dtype=np.int64)
            counts = np.where(row >= 0, 1, 0)
            for i, tup in multi[e_idx].items():
                counts[i] = len(tup)
            np.cumsum(counts, out=offsets[1:])
            targets = np.empty(int(offsets[-1]), dtype=np.int32)
            for i in range(n):
                lo = offsets[i]
                if row[i] >= 0:
                    targets[lo] = row[i]
                else:
                    tup = multi[e_idx][i]
                    targets[lo:lo + len(tup)] = tup
            tables.append(_SuccTable(False, targets, offsets))
    return ReachableSpace(
        model=model,
        states=states,
        index=index,
        tables=tables,
        parent=np.asarray(parent, dtype=np.int32),
        parent_event=np.asarray(parent_event, dtype=np.int16),
    )


class SpaceAnalysis:
    """Index-space companions for the checkers.

    Per-domain equivalence-class ids (first-occurrence order), per-event
    executing-domain profiles, and successor-class helpers.  Class ids
    are exact for models with view_key; models without one get classes
    by pairwise vpeq partition refinement (small spaces only).
    """

    _REFINE_LIMIT = 20_000

    def __init__(self, space: ReachableSpace):
        self.space = space
        model = space.model
        n = space.size
        self.class_ids = {}
        self.n_classes = {}
        if model.view_key is not None:
            for d in model.domains:
                ids = np.empty(n, dtype=np.int32)
                table = {}
                vk = model.view_key
                for i, s in enumerate(space.states):
                    k = vk(d, s)
                    c = table.get(k)
                    if c is None:
                        c = len(table)
                        table[k] = c
                    ids[i] = c
                self.class_ids[d] = ids
                self.n_classes[d] = len(table)
        else:
            if n > self._REFINE_LIMIT:
                raise ModelValidityError(
                    f"{model.name}: {n} states need a view_key for class analysis")
            for d in model.domains:
                ids = np.full(n, -1, dtype=np.int32)
                reps = []
                for i, s in enumerate(space.states):
                    for c, r in enumerate(reps):
                        if model.vpeq(s, d, r):
                            ids[i] = c
                            break
                    else:
                        ids[i] = len(reps)
                        reps.append(s)
                self.class_ids[d] = ids
                self.n_classes[d] = len(reps)
        # executing domain per (event, state): ("const", d) or per-state array
        self.dom_const = {}
        self.dom_array = {}
        self._cur_array = None
        for e_idx, e in enumerate(model.events):
            prof = model.dom_profile(e) if model.dom_profile else None
            if prof is not None and prof[0] == "const":
                self.dom_const[e_idx] = prof[1]
            elif prof is not None and prof[0] == "cur":
                if self._cur_array is None:
                    cur = np.empty(n, dtype=np.int32)
                    for i, s in enumerate(space.states):
                        cur[i] = model.cur_of(s)
                    self._cur_array = cur
                self.dom_array[e_idx] = self._cur_array
            else:
                arr = np.empty(n, dtype=np.int32)
                for i, s in enumerate(space.states):
                    arr[i] = model.dom(s, e)
                first = arr[0]
                if np.all(arr == first):
                    self.dom_const[e_idx] = int(first)
                else:
                    self.dom_array[e_idx] = arr

    def dom_of(self, e_idx):
        """("const", d) or ("array", int32 per-state array)."""
        if e_idx in self.dom_const:
            return ("const", self.dom_const[e_idx])
        return ("array", self.dom_array[e_idx])

    def domain_class_of(self, state_idx, e_idx):
        kind, v = self.dom_of(e_idx)
        return v if kind == "const" else int(v[state_idx])

    def succ_class_signature(self, e_idx, d):
        """Per-state signature of the successor d-class set under event e.

        Deterministic events: the successor's class id.  Branching
        events: a dense id for the sorted distinct class tuple.
        Returns (signature int32 array, branching flag).
        """
        table = self.space.tables[e_idx]
        cls = self.class_ids[d]
        if table.det:
            return cls[table.targets], False
        succ_cls = cls[table.targets]
        sig = np.empty(self.space.size, dtype=np.int32)
        cache = {}
        off = table.offsets
        for i in range(self.space.size):
            key = tuple(sorted(set(succ_cls[off[i]:off[i + 1]].tolist())))
            c = cache.get(key)
            if c is None:
                c = len(cache)
                cache[key] = c
            sig[i] = c
        return sig, True


@dataclass
class AssumptionResult:
    assumption: int
    description: str
    holds: bool
    witness: Optional[dict] = None
    note: str = ""


@dataclass
class ValidationReport:
    model_name: str
    results: list

    @property
    def all_pass(self):
        return all(r.holds for r in self.results)

    def failed(self):
        return [r for r in self.results if not r.holds]


def validate_model(model: ModelInstance, space: ReachableSpace,
                   pair_budget: int = DEFAULT_PAIR_BUDGET,
                   seed: int = 0) -> ValidationReport:
    """Check the six security-model assumptions over the reachable space.

    Equivalence laws are checked on every pair when size**2 fits the
    pair budget and on a seeded sample otherwise.  Failures are data
    (witnesses), not exceptions.
    """
    results = []
    doms = model.domains
    parts = model.partitions
    intf = model.interferes

    w = None
    for p1 in parts:
        for p2 in parts:
            if p1 != p2 and intf(p1, p2):
                if not (intf(p1, TRANSMITTER) and intf(TRANSMITTER, p2)):
                    w = {"p1": model.domain_name(p1), "p2": model.domain_name(p2)}
                    break
        if w:
            break
    results.append(AssumptionResult(
        1, "partition interference is transmitter-mediated", w is None, w))

    w = None
    for d in doms:
        if not intf(SCHEDULER, d):
            w = {"d": model.domain_name(d)}
            break
    results.append(AssumptionResult(
        2, "the scheduler interferes with every domain", w is None, w))

    w = None
    for d in doms:
        if d != SCHEDULER and intf(d, SCHEDULER):
            w = {"d": model.domain_name(d)}
            break
    results.append(AssumptionResult(
        3, "only the scheduler interferes with the scheduler", w is None, w))

    n = space.size
    rng = np.random.default_rng(seed)
    full = n * n <= pair_budget
    if full:
        pair_count = n * n
        pairs = ((i, j) for i in range(n) for j in range(n))
    else:
        pair_count = min(pair_budget, 50_000)
        pairs = zip(rng.integers(0, n, pair_count).tolist(),
                    rng.integers(0, n, pair_count).tolist())
    w = None
    note = "all pairs" if full else f"{pair_count} sampled pairs"
    states = space.states
    vpeq = model.vpeq
    for i, j in pairs:
        s, t = states[i], states[j]
        for d in doms:
            st = vpeq(s, d, t)
            if i == j and not st:
                w = {"law": "reflexivity", "d": model.domain_name(d), "s": i}
                break
            if st != vpeq(t, d, s):
                w = {"law": "symmetry", "d": model.domain_name(d), "s": i, "t": j}
                break
        if w:
            break
    if w is None and not full:
        # transitivity on sampled triples
        for _ in range(10_000):
            i, j, k = rng.integers(0, n, 3).tolist()
            for d in doms:
                if (vpeq(states[i], d, states[j]) and vpeq(states[j], d, states[k])
                        and not vpeq(states[i], d, states[k])):
                    w = {"law": "transitivity", "d": model.domain_name(d),
                         "s": i, "t": j, "u": k}
                    break
            if w:
                break
    elif w is None and full:
        # with full pair coverage, transitivity follows from the class
        # structure when vpeq matches the class ids; verify that instead
        an = space.analysis()
        for d in doms:
            cls = an.class_ids[d]
            for i in range(n):
                for j in range(i, n):
                    if (cls[i] == cls[j]) != vpeq(states[i], d, states[j]):
                        w = {"law": "class-consistency", "d": model.domain_name(d),
                             "s": i, "t": j}
                        break
                if w:
                    break
            if w:
                break
    results.append(AssumptionResult(
        4, "vpeq is an equivalence relation per domain", w is None, w, note))

    # assumption 5: scheduler-equivalent states agree on every event's domain
    an = space.analysis()
    cls_s = an.class_ids[SCHEDULER]
    w = None
    for e_idx, e in enumerate(model.events):
        kind, v = an.dom_of(e_idx)
        if kind == "const":
            continue
        order = np.argsort(cls_s, kind="stable")
        sorted_cls = cls_s[order]
        sorted_dom = v[order]
        same_class = sorted_cls[1:] == sorted_cls[:-1]
        bad = same_class & (sorted_dom[1:] != sorted_dom[:-1])
        if bad.any():
            k = int(np.argmax(bad))
            w = {"event": repr(e), "s": int(order[k]), "t": int(order[k + 1])}
            break
    results.append(AssumptionResult(
        5, "scheduler-equivalent states agree on event domains", w is None, w))

    # assumption 6: totality.  BFS construction already guarantees it;
    # re-assert from the stored tables.
    ok = all(t.det or bool(np.all(np.diff(t.offsets) > 0)) for t in space.tables)
    results.append(AssumptionResult(
        6, "every event is enabled in every reachable state", ok, None))

    # spot-check that any dom_profile shortcut agrees with model.dom
    if model.dom_profile is not None and n > 0:
        m = min(n, 2000)
        idxs = rng.integers(0, n, m)
        for e_idx, e in enumerate(model.events):
            kind, v = an.dom_of(e_idx)
            for i in idxs[: max(1, m // len(model.events))]:
                got = model.dom(states[int(i)], e)
                want = v if kind == "const" else int(v[int(i)])
                if got != want:
                    raise ModelValidityError(
                        f"{model.name}: dom_profile disagrees with dom on {e!r}")
    return ValidationReport(model.name, results)
