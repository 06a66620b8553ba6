"""Static build-time kernel configuration and its file format (schema v1).

Everything the kernel models range over is fixed here: partitions and
their ports, channels, the message alphabet, queue capacities, and the
per-partition process bounds used by the second level.  Port ids are
assigned statically from declaration order, which is itself one of the
modeled security fixes (dynamic id allocation is a storage channel).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

QUEUING = "queuing"
SAMPLING = "sampling"

MODES = ("IDLE", "COLD_START", "WARM_START", "NORMAL")
IDLE, COLD_START, WARM_START, NORMAL = range(4)

CONFIG_SCHEMA = "seplab-config-v1"


class ParseError(Exception):
    pass


class InvalidConfig(Exception):
    def __init__(self, constraint, detail=""):
        super().__init__(f"{constraint}: {detail}" if detail else constraint)
        self.constraint = constraint


@dataclass(frozen=True)
class PartitionConfig:
    name: str
    ports: tuple
    max_processes: int = 0
    priority_range: tuple = ()


@dataclass(frozen=True)
class ChannelConfig:
    mode: str
    name: str
    source: str
    dest: str
    capacity: int = 1


@dataclass(frozen=True)
class KernelConfig:
    partitions: tuple
    channels: tuple
    alphabet: tuple
    scheduler_policy: str = "nondeterministic"

    # --- static lookups (derived, fixed at validation time) ---

    def port_names(self):
        return tuple(p for part in self.partitions for p in part.ports)

    def port_ids(self):
        return {name: i for i, name in enumerate(self.port_names())}

    def port_owner(self):
        """port name -> partition index."""
        return {p: i for i, part in enumerate(self.partitions) for p in part.ports}

    def channel_for_port(self):
        """port name -> (channel, 'source'|'dest')."""
        out = {}
        for ch in self.channels:
            out[ch.source] = (ch, "source")
            out[ch.dest] = (ch, "dest")
        return out

    def partition_index(self):
        return {p.name: i for i, p in enumerate(self.partitions)}


def validate_config(conf: KernelConfig) -> KernelConfig:
    if not conf.partitions:
        raise InvalidConfig("nonempty-partitions", "at least one partition required")
    names = [p.name for p in conf.partitions]
    if len(set(names)) != len(names):
        raise InvalidConfig("unique-partition-names")
    ports = conf.port_names()
    if len(set(ports)) != len(ports):
        raise InvalidConfig("unique-port-names")
    if not conf.alphabet:
        raise InvalidConfig("nonempty-alphabet")
    if len(set(conf.alphabet)) != len(conf.alphabet):
        raise InvalidConfig("unique-alphabet")
    owner = conf.port_owner()
    seen_endpoint = set()
    ch_names = [c.name for c in conf.channels]
    if len(set(ch_names)) != len(ch_names):
        raise InvalidConfig("unique-channel-names")
    for ch in conf.channels:
        if ch.mode not in (QUEUING, SAMPLING):
            raise InvalidConfig("channel-mode", f"{ch.name}: {ch.mode!r}")
        for endpoint in (ch.source, ch.dest):
            if endpoint not in owner:
                raise InvalidConfig(
                    "channel-endpoint-configured",
                    f"{ch.name}: port {endpoint!r} is not a configured port")
            if endpoint in seen_endpoint:
                raise InvalidConfig(
                    "port-single-channel", f"port {endpoint!r} used by two channels")
            seen_endpoint.add(endpoint)
        if owner[ch.source] == owner[ch.dest]:
            raise InvalidConfig(
                "channel-endpoints-distinct-partitions",
                f"{ch.name}: both ports belong to {names[owner[ch.source]]}")
        if ch.mode == QUEUING and ch.capacity < 1:
            raise InvalidConfig("queuing-capacity-positive", ch.name)
    for p in conf.partitions:
        if p.max_processes < 0:
            raise InvalidConfig("max-processes-nonnegative", p.name)
        if p.max_processes and not p.priority_range:
            raise InvalidConfig("priority-range-nonempty", p.name)
        if len(set(p.priority_range)) != len(p.priority_range):
            raise InvalidConfig("priority-range-unique", p.name)
    return conf


def parse_config(data: dict) -> KernelConfig:
    if not isinstance(data, dict):
        raise ParseError("config root must be an object")
    if data.get("schema") != CONFIG_SCHEMA:
        raise ParseError(f"expected schema {CONFIG_SCHEMA!r}, got {data.get('schema')!r}")
    try:
        partitions = tuple(
            PartitionConfig(
                name=p["name"],
                ports=tuple(p.get("ports", ())),
                max_processes=int(p.get("max_processes", 0)),
                priority_range=tuple(p.get("priority_range", ())),
            )
            for p in data["partitions"])
        channels = tuple(
            ChannelConfig(
                mode=c["mode"],
                name=c["name"],
                source=c["source"],
                dest=c["dest"],
                capacity=int(c.get("capacity", 1)),
            )
            for c in data.get("channels", ()))
        alphabet = tuple(data["alphabet"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed config: {exc}") from exc
    return validate_config(KernelConfig(partitions, channels, alphabet))


def load_config(path) -> KernelConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc}") from exc
    return parse_config(data)


def config_to_dict(conf: KernelConfig) -> dict:
    return {
        "schema": CONFIG_SCHEMA,
        "partitions": [
            {
                "name": p.name,
                "ports": list(p.ports),
                "max_processes": p.max_processes,
                "priority_range": list(p.priority_range),
            }
            for p in conf.partitions
        ],
        "channels": [
            {
                "mode": c.mode,
                "name": c.name,
                "source": c.source,
                "dest": c.dest,
                "capacity": c.capacity,
            }
            for c in conf.channels
        ],
        "alphabet": list(conf.alphabet),
    }


def baseline_config() -> KernelConfig:
    """The exhaustively checkable reference configuration.

    Two partitions, one queuing channel P1->P2 (capacity 1) and one
    sampling channel P1->P2, alphabet {0,1}.  P1 carries two process
    slots with priorities {0,1} so the priority-maximality branch and
    ties are both exercised; P2 carries one slot.  The asymmetry keeps
    the level-2 reachable space inside the default state budget.
    """
    return validate_config(KernelConfig(
        partitions=(
            PartitionConfig("P1", ports=("qs", "ss"),
                            max_processes=2, priority_range=(0, 1)),
            PartitionConfig("P2", ports=("qd", "sd"),
                            max_processes=1, priority_range=(0,)),
        ),
        channels=(
            ChannelConfig(QUEUING, "qc", source="qs", dest="qd", capacity=1),
            ChannelConfig(SAMPLING, "sc", source="ss", dest="sd"),
        ),
        alphabet=(0, 1),
    ))


def mini_config() -> KernelConfig:
    """Small two-partition config for fast end-to-end runs."""
    return validate_config(KernelConfig(
        partitions=(
            PartitionConfig("P1", ports=("q_out",), max_processes=1,
                            priority_range=(0,)),
            PartitionConfig("P2", ports=("q_in",), max_processes=1,
                            priority_range=(0,)),
        ),
        channels=(
            ChannelConfig(QUEUING, "qc", source="q_out", dest="q_in", capacity=1),
        ),
        alphabet=(0,),
    ))
