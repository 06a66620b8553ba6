"""Top-level kernel model: modes, ports, channel transfer, scheduling.

States are flat tuples of small ints so the breadth-first closure can
hash and dedupe millions of them cheaply:

    (cur, mode_0 .. mode_{np-1}, port_0 .. port_{k-1} [, reg_0 .. reg_{np-1}])

cur is the executing domain (transmitter before the first schedule).
A queuing port slot is 0 when the port is not created, else 1 + the
index of its buffer in the per-port buffer table; a sampling slot is
0 / 1 (no value) / 2 + message index.  The optional register block only
exists in covert variants that make hypercall return values observable.

The mutation flags reproduce the insecure designs studied by the covert
lab; every flag defaults to the secure baseline behaviour.
"""

from __future__ import annotations

from ..model import ModelInstance, SCHEDULER, TRANSMITTER, partition_domain
from .config import (COLD_START, IDLE, NORMAL, QUEUING, SAMPLING, WARM_START,
                     KernelConfig)


def _buffers(capacity, n_msgs):
    """All queue contents up to capacity, shortest first, lexicographic."""
    out = [()]
    level = [()]
    for _ in range(capacity):
        level = [b + (m,) for b in level for m in range(n_msgs)]
        out.extend(level)
    return out


class Level1Kernel:
    """Executable top-level specification for one static configuration."""

    def __init__(self, conf: KernelConfig, *,
                 ownership_checks=True,
                 lossy_transfer=True,
                 send_records_status=False,
                 port_id_counter=False,
                 schedule_skips_idle=False,
                 name="arinc-l1"):
        self.conf = conf
        self.name = name
        self.ownership_checks = ownership_checks
        self.lossy_transfer = lossy_transfer
        self.send_records_status = send_records_status
        self.port_id_counter = port_id_counter
        self.schedule_skips_idle = schedule_skips_idle
        self.has_register = send_records_status or port_id_counter

        self.n_parts = len(conf.partitions)
        self.part_domains = tuple(partition_domain(i) for i in range(self.n_parts))
        self.domains = (SCHEDULER, TRANSMITTER) + self.part_domains
        self.domain_names = {SCHEDULER: "S", TRANSMITTER: "T"}
        for i, p in enumerate(conf.partitions):
            self.domain_names[partition_domain(i)] = p.name

        self.msgs = tuple(conf.alphabet)
        self.msg_idx = {m: i for i, m in enumerate(self.msgs)}

        # per-port static metadata
        self.port_names = conf.port_names()
        self.port_id = conf.port_ids()
        owner_by_name = conf.port_owner()
        chan_role = conf.channel_for_port()
        self.n_ports = len(self.port_names)
        self.port_owner = []
        self.port_kind = []    # 'q' | 's'
        self.port_role = []    # 'source' | 'dest' | None
        self.port_channel = []
        self.port_capacity = []
        self.buf_tables = []   # queuing: list of buffers; sampling: None
        self.buf_code = []
        for name_ in self.port_names:
            self.port_owner.append(owner_by_name[name_])
            ch, role = chan_role.get(name_, (None, None))
            self.port_channel.append(ch)
            self.port_role.append(role)
            if ch is not None and ch.mode == QUEUING:
                self.port_kind.append("q")
                cap = ch.capacity
                table = _buffers(cap, len(self.msgs))
                self.port_capacity.append(cap)
                self.buf_tables.append(table)
                self.buf_code.append({b: i + 1 for i, b in enumerate(table)})
            elif ch is not None and ch.mode == SAMPLING:
                self.port_kind.append("s")
                self.port_capacity.append(0)
                self.buf_tables.append(None)
                self.buf_code.append(None)
            else:
                # port configured but not attached to a channel: model it
                # as a sampling-style slot nobody transfers
                self.port_kind.append("s")
                self.port_capacity.append(0)
                self.buf_tables.append(None)
                self.buf_code.append(None)

        # layout
        self.mode_off = 1
        self.port_off = 1 + self.n_parts
        self.reg_off = self.port_off + self.n_ports if self.has_register else None
        self.state_len = self.port_off + self.n_ports + (
            self.n_parts if self.has_register else 0)

        self.queuing_channels = tuple(c for c in conf.channels if c.mode == QUEUING)
        self.sampling_channels = tuple(c for c in conf.channels if c.mode == SAMPLING)
        self.source_ports = tuple(
            i for i in range(self.n_ports) if self.port_role[i] == "source")
        self.dest_q_ports = tuple(
            i for i in range(self.n_ports)
            if self.port_role[i] == "dest" and self.port_kind[i] == "q")

        self._part_sources = [
            any(self.port_owner[i] == p for i in self.source_ports)
            for p in range(self.n_parts)]
        self._part_sinks = [
            any(self.port_owner[i] == p and self.port_role[i] == "dest"
                for i in range(self.n_ports))
            for p in range(self.n_parts)]

        self.events = self._build_events()
        self._compiled = [self._compile(e) for e in self.events]
        self._event_idx = {e: i for i, e in enumerate(self.events)}
        self._hypercall_kinds = {
            "create_sampling_port", "write_sampling_message",
            "read_sampling_message", "get_sampling_port_id",
            "create_queuing_port", "send_queuing_message",
            "receive_queuing_message", "get_queuing_port_id",
            "set_partition_mode", "get_partition_status",
            "create_process", "start_process", "stop_process",
            "suspend_process", "resume_process", "set_priority",
            "get_process_status", "schedule_process"}
        self._part_views = [self._make_part_view(p) for p in range(self.n_parts)]

    # ------------------------------------------------------------------
    # event universe

    def _build_events(self):
        evs = []
        q_ports = [i for i in range(self.n_ports) if self.port_kind[i] == "q"]
        s_ports = [i for i in range(self.n_ports) if self.port_kind[i] == "s"]
        s_names = [self.port_names[i] for i in s_ports]
        q_names = [self.port_names[i] for i in q_ports]
        evs += [("create_sampling_port", n) for n in s_names]
        evs += [("write_sampling_message", p, m) for p in s_ports for m in self.msgs]
        evs += [("read_sampling_message", p) for p in s_ports]
        evs += [("get_sampling_port_id", n) for n in s_names]
        evs += [("create_queuing_port", n) for n in q_names]
        evs += [("send_queuing_message", p, m) for p in q_ports for m in self.msgs]
        evs += [("receive_queuing_message", p) for p in q_ports]
        evs += [("get_queuing_port_id", n) for n in q_names]
        evs += [("set_partition_mode", m) for m in range(4)]
        evs += [("get_partition_status",)]
        evs += [("schedule",)]
        evs += [("transfer_sampling_message", c.name) for c in self.sampling_channels]
        evs += [("transfer_queuing_message", c.name) for c in self.queuing_channels]
        return tuple(evs)

    # ------------------------------------------------------------------
    # state construction and helpers

    def initial_state(self):
        s = [TRANSMITTER]
        s += [COLD_START] * self.n_parts
        s += [0] * self.n_ports
        if self.has_register:
            s += [0] * self.n_parts
        return tuple(s)

    def cur_of(self, s):
        return s[0]

    def mode(self, s, p):
        return s[self.mode_off + p]

    def port_slot(self, s, port):
        return s[self.port_off + port]

    def buffer_of(self, s, port):
        slot = s[self.port_off + port]
        return None if slot == 0 else self.buf_tables[port][slot - 1]

    def sampling_value(self, s, port):
        slot = s[self.port_off + port]
        if slot <= 1:
            return None
        return self.msgs[slot - 2]

    def created(self, s, port):
        return s[self.port_off + port] != 0

    def created_count(self, s):
        return sum(1 for i in range(self.n_ports) if s[self.port_off + i] != 0)

    def _set(self, s, i, v):
        return s[:i] + (v,) + s[i + 1:]

    def _record(self, s, p, value):
        return self._set(s, self.reg_off + p, value)

    # ------------------------------------------------------------------
    # services (return-value flavoured, used by tests and the demo)

    def schedule_successors(self, s):
        if self.schedule_skips_idle:
            cands = [partition_domain(p) for p in range(self.n_parts)
                     if s[self.mode_off + p] != IDLE]
        else:
            cands = list(self.part_domains)
        cands.append(TRANSMITTER)
        return tuple((d,) + s[1:] for d in cands)

    def set_partition_mode(self, s, m):
        cur = s[0]
        if cur < 2:
            return s
        p = cur - 2
        old = s[self.mode_off + p]
        if old == COLD_START and m == WARM_START:
            return s
        return self._set(s, self.mode_off + p, m)

    def create_port(self, s, name):
        cur = s[0]
        if cur < 2:
            return s
        p = cur - 2
        port = self.port_id[name]
        if self.port_owner[port] != p or s[self.port_off + port] != 0:
            return s
        s2 = self._set(s, self.port_off + port, 1)
        if self.port_id_counter:
            s2 = self._record(s2, p, self.created_count(s) + 1)
        return s2

    def send_queuing_message(self, s, port, msg):
        """Returns (state', accepted).  A full buffer silently drops the
        message but still reports acceptance; rejection only signals an
        invalid or foreign port."""
        cur = s[0]
        if cur < 2 or self.port_kind[port] != "q" or self.port_role[port] != "source":
            return s, False
        p = cur - 2
        if not self.created(s, port):
            return s, False
        if self.ownership_checks and self.port_owner[port] != p:
            return s, False
        buf = self.buf_tables[port][s[self.port_off + port] - 1]
        full = len(buf) == self.port_capacity[port]
        if full:
            s2 = s
        else:
            s2 = self._set(s, self.port_off + port,
                           self.buf_code[port][buf + (msg,)])
        if self.send_records_status:
            s2 = self._record(s2, p, 1 if full else 2)
        return s2, True

    def receive_queuing_message(self, s, port):
        cur = s[0]
        if cur < 2 or self.port_kind[port] != "q" or self.port_role[port] != "dest":
            return s, None
        p = cur - 2
        if not self.created(s, port):
            return s, None
        if self.ownership_checks and self.port_owner[port] != p:
            return s, None
        buf = self.buf_tables[port][s[self.port_off + port] - 1]
        if not buf:
            return s, None
        s2 = self._set(s, self.port_off + port, self.buf_code[port][buf[1:]])
        return s2, self.msgs[buf[0]]

    def write_sampling_message(self, s, port, msg):
        cur = s[0]
        if cur < 2 or self.port_kind[port] != "s" or self.port_role[port] != "source":
            return s, False
        p = cur - 2
        if not self.created(s, port):
            return s, False
        if self.ownership_checks and self.port_owner[port] != p:
            return s, False
        return self._set(s, self.port_off + port, 2 + self.msg_idx[msg]), True

    def read_sampling_message(self, s, port):
        """Non-destructive read of the destination's last value."""
        cur = s[0]
        if cur < 2 or self.port_kind[port] != "s" or self.port_role[port] != "dest":
            return s, None
        p = cur - 2
        if not self.created(s, port):
            return s, None
        if self.ownership_checks and self.port_owner[port] != p:
            return s, None
        return s, self.sampling_value(s, port)

    def transfer_queuing(self, s, ch):
        src = self.port_id[ch.source]
        dst = self.port_id[ch.dest]
        src_slot = s[self.port_off + src]
        if src_slot == 0:
            return s
        buf = self.buf_tables[src][src_slot - 1]
        if not buf:
            return s
        dst_slot = s[self.port_off + dst]
        dst_buf = None if dst_slot == 0 else self.buf_tables[dst][dst_slot - 1]
        dst_room = dst_buf is not None and len(dst_buf) < self.port_capacity[dst]
        if self.lossy_transfer:
            # always drain the source; the message is lost unless the
            # destination exists and has room
            s2 = self._set(s, self.port_off + src, self.buf_code[src][buf[1:]])
            if dst_room:
                s2 = self._set(s2, self.port_off + dst,
                               self.buf_code[dst][dst_buf + (buf[0],)])
            return s2
        # blocking flavour: nothing moves while the destination is full
        if not dst_room:
            return s
        s2 = self._set(s, self.port_off + src, self.buf_code[src][buf[1:]])
        return self._set(s2, self.port_off + dst,
                         self.buf_code[dst][dst_buf + (buf[0],)])

    def transfer_sampling(self, s, ch):
        src = self.port_id[ch.source]
        dst = self.port_id[ch.dest]
        src_slot = s[self.port_off + src]
        if src_slot <= 1 or s[self.port_off + dst] == 0:
            return s
        return self._set(s, self.port_off + dst, src_slot)

    # ------------------------------------------------------------------
    # event compilation (per-event closures used by the state search)

    def _compile(self, e):
        kind = e[0]
        if kind == "schedule":
            return self.schedule_successors
        if kind == "set_partition_mode":
            m = e[1]
            return lambda s, m=m: (self.set_partition_mode(s, m),)
        if kind in ("create_sampling_port", "create_queuing_port"):
            n = e[1]
            return lambda s, n=n: (self.create_port(s, n),)
        if kind == "send_queuing_message":
            port, msg = e[1], e[2]
            return lambda s: (self.send_queuing_message(s, port, msg)[0],)
        if kind == "receive_queuing_message":
            port = e[1]
            return lambda s: (self.receive_queuing_message(s, port)[0],)
        if kind == "write_sampling_message":
            port, msg = e[1], e[2]
            return lambda s: (self.write_sampling_message(s, port, msg)[0],)
        if kind == "transfer_queuing_message":
            ch = next(c for c in self.queuing_channels if c.name == e[1])
            return lambda s: (self.transfer_queuing(s, ch),)
        if kind == "transfer_sampling_message":
            ch = next(c for c in self.sampling_channels if c.name == e[1])
            return lambda s: (self.transfer_sampling(s, ch),)
        # read-only services
        return lambda s: (s,)

    def step(self, e, s):
        return self._compiled[self._event_idx[e]](s)

    # ------------------------------------------------------------------
    # security configuration

    def interferes(self, d1, d2):
        if d1 == d2:
            return True
        if d1 == SCHEDULER:
            return True
        if d2 == SCHEDULER:
            return False
        if d1 == TRANSMITTER:
            return d2 >= 2 and self._part_sinks[d2 - 2]
        if d2 == TRANSMITTER:
            return self._part_sources[d1 - 2]
        return False

    def dom(self, s, e):
        kind = e[0]
        if kind == "schedule":
            return SCHEDULER
        if kind in ("transfer_sampling_message", "transfer_queuing_message"):
            return TRANSMITTER
        return s[0]

    def dom_profile(self, e):
        kind = e[0]
        if kind == "schedule":
            return ("const", SCHEDULER)
        if kind in ("transfer_sampling_message", "transfer_queuing_message"):
            return ("const", TRANSMITTER)
        return ("cur",)

    # views -------------------------------------------------------------
    #
    # Scheduler: the executing domain.  Transmitter: contents of every
    # channel-source port (and destination fullness when the transfer
    # blocks, since a blocking transmitter reads it).  Partition: own
    # mode, own created-port set, and what its destination ports let it
    # receive - queue lengths and sampling values.  A sender's view
    # deliberately excludes its source-port contents: with lossy
    # transfer the send status is state-independent, and this is what
    # keeps the transmitter from writing into the sender's view.

    def _make_part_view(self, p):
        own = [i for i in range(self.n_ports) if self.port_owner[i] == p]
        dest_q = [i for i in own if self.port_role[i] == "dest"
                  and self.port_kind[i] == "q"]
        dest_s = [i for i in own if self.port_role[i] == "dest"
                  and self.port_kind[i] == "s"]
        src_q = [i for i in own if self.port_role[i] == "source"
                 and self.port_kind[i] == "q"]
        mode_i = self.mode_off + p
        poff = self.port_off
        tables = self.buf_tables
        caps = self.port_capacity
        observe_src_full = self.send_records_status
        reg_i = self.reg_off + p if self.has_register else None

        def view(s):
            key = [s[mode_i]]
            for i in own:
                key.append(1 if s[poff + i] else 0)
            for i in dest_q:
                slot = s[poff + i]
                key.append(0 if slot == 0 else 1 + len(tables[i][slot - 1]))
            for i in dest_s:
                key.append(s[poff + i])
            if observe_src_full:
                for i in src_q:
                    slot = s[poff + i]
                    key.append(0 if slot == 0
                               else (2 if len(tables[i][slot - 1]) == caps[i] else 1))
            if reg_i is not None:
                key.append(s[reg_i])
            return tuple(key)

        return view

    def view_key(self, d, s):
        if d == SCHEDULER:
            return (s[0],)
        if d == TRANSMITTER:
            key = [s[self.port_off + i] for i in self.source_ports]
            if not self.lossy_transfer:
                for i in self.dest_q_ports:
                    slot = s[self.port_off + i]
                    key.append(0 if slot == 0 else
                               (2 if len(self.buf_tables[i][slot - 1]) ==
                                self.port_capacity[i] else 1))
            return tuple(key)
        return self._part_views[d - 2](s)

    def vpeq(self, s, d, t):
        return self.view_key(d, s) == self.view_key(d, t)

    # ------------------------------------------------------------------

    def model(self) -> ModelInstance:
        return ModelInstance(
            name=self.name,
            s0=self.initial_state(),
            events=self.events,
            domains=self.domains,
            step=self.step,
            dom=self.dom,
            interferes=self.interferes,
            view_key=self.view_key,
            domain_names=self.domain_names,
            dom_profile=self.dom_profile,
            cur_of=self.cur_of,
            step_compiled=self._compiled,
        )


def system_init(conf: KernelConfig):
    """Initial kernel state for a validated configuration."""
    return Level1Kernel(conf).initial_state()


def build_level1_model(conf: KernelConfig, **flags) -> ModelInstance:
    return Level1Kernel(conf, **flags).model()
