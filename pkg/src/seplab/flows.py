"""sources / ipurge: who may influence an observer, and the purged run.

Two implementations of the same recursions live here on purpose.  The
naive twins follow the defining recursion directly and exist as the
oracle; the engine memoizes on (suffix, state-or-state-set, domain)
because the recursion is exponential when taken literally.  The
acceptance suite holds them equal.
"""

from __future__ import annotations

from .model import BoundTooLarge, DEFAULT_MAX_SEQ_LEN, ModelInstance


def naive_sources(model: ModelInstance, es, s, d) -> frozenset:
    """Domains allowed to pass information to d along es from s (oracle)."""
    if not es:
        return frozenset((d,))
    e, rest = es[0], es[1:]
    out = set()
    w = model.dom(s, e)
    add_w = False
    for s2 in model.step(e, s):
        sub = naive_sources(model, rest, s2, d)
        out.update(sub)
        if not add_w:
            for v in sub:
                if model.interferes(w, v):
                    add_w = True
                    break
    if add_w:
        out.add(w)
    return frozenset(out)


def naive_ipurge(model: ModelInstance, es, d, ss) -> tuple:
    """es with events that may not influence d deleted (oracle)."""
    if not es:
        return ()
    e, rest = es[0], es[1:]
    keep = any(model.dom(s, e) in naive_sources(model, es, s, d) for s in ss)
    if keep:
        image = set()
        for s in ss:
            image.update(model.step(e, s))
        return (e,) + naive_ipurge(model, rest, d, frozenset(image))
    return naive_ipurge(model, rest, d, ss)


class FlowEngine:
    """Memoized sources/ipurge over a model.

    Keys are (event-suffix, state, domain) and (event-suffix, domain,
    state-set); suffixes shared between queried sequences hit the cache.
    The recursion depth is capped by max_len.
    """

    def __init__(self, model: ModelInstance, max_len: int = DEFAULT_MAX_SEQ_LEN):
        self.model = model
        self.max_len = max_len
        self._sources = {}
        self._ipurge = {}
        self._step = {}

    def clear(self):
        self._sources.clear()
        self._ipurge.clear()
        self._step.clear()

    def _successors(self, e, s):
        key = (e, s)
        out = self._step.get(key)
        if out is None:
            out = self.model.step(e, s)
            self._step[key] = out
        return out

    def sources(self, es, s, d) -> frozenset:
        es = tuple(es)
        if len(es) > self.max_len:
            raise BoundTooLarge(
                f"sequence length {len(es)} exceeds the configured bound {self.max_len}")
        return self._sources_rec(es, s, d)

    def _sources_rec(self, es, s, d):
        if not es:
            return frozenset((d,))
        key = (es, s, d)
        out = self._sources.get(key)
        if out is not None:
            return out
        model = self.model
        e, rest = es[0], es[1:]
        acc = set()
        w = model.dom(s, e)
        add_w = False
        for s2 in self._successors(e, s):
            sub = self._sources_rec(rest, s2, d)
            acc.update(sub)
            if not add_w and any(model.interferes(w, v) for v in sub):
                add_w = True
        if add_w:
            acc.add(w)
        out = frozenset(acc)
        self._sources[key] = out
        return out

    def ipurge(self, es, d, ss) -> tuple:
        es = tuple(es)
        if len(es) > self.max_len:
            raise BoundTooLarge(
                f"sequence length {len(es)} exceeds the configured bound {self.max_len}")
        return self._ipurge_rec(es, d, frozenset(ss))

    def _ipurge_rec(self, es, d, ss):
        if not es:
            return ()
        key = (es, d, ss)
        out = self._ipurge.get(key)
        if out is not None:
            return out
        model = self.model
        e, rest = es[0], es[1:]
        keep = any(model.dom(s, e) in self._sources_rec(es, s, d) for s in ss)
        if keep:
            image = set()
            for s in ss:
                image.update(self._successors(e, s))
            out = (e,) + self._ipurge_rec(rest, d, frozenset(image))
        else:
            out = self._ipurge_rec(rest, d, ss)
        self._ipurge[key] = out
        return out
