"""Deterministic discrete-event simulation of LoWPAN segments.

A world holds WPAN nodes, point-to-point radio links, optional gateways
and wired IPv6 hosts.  Events are processed in (time, sequence) order
from a single queue; the only randomness is per-transmission loss,
sampled from one seeded generator, so a world's trace is a pure
function of its scenario and seed.

Node behaviour:

  * Unicast traffic is mesh-wrapped: the originator sets the hops-left
    budget and transmits without decrementing; every forwarding node
    decrements before sending and drops the frame when the budget hits
    zero.  Only coordinators and FFDs forward; an RFD receiving a frame
    for someone else drops it.
  * Broadcasts ride a mesh header addressed to 0xFFFF plus a one-octet
    sequence number; receivers deliver once per (originator, sequence),
    re-flood if they are forwarders, and drop duplicates.  The
    originating application counts as a subscriber of its own flood, so
    every node in a connected mesh delivers exactly one copy.
  * A sleeping node neither transmits nor receives; frames that arrive
    during a sleep period are lost.
  * Datagrams larger than the security-adjusted MAC payload budget are
    fragmented after compression and reassembled only at the mesh
    final destination, under the 60-second window.

Trace records are one line each: time, node, event kind, detail and a
byte count, tab separated.
"""

from __future__ import annotations

import heapq
import random
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from functools import partial
from ipaddress import IPv6Address

from . import addressing
from .codec import (
    CodecError,
    DispatchKind,
    MeshHeader,
    compress_ipv6,
    decode_bc0,
    decode_mesh,
    decompress_ipv6,
    encode_bc0,
    encode_mesh,
    parse_dispatch,
)
from .frame import (
    BROADCAST_SHORT,
    PHY_OVERHEAD,
    Eui64,
    FrameError,
    FrameType,
    MacFrame,
    NodeAddress,
    PhyBand,
    SecurityMode,
    Short16,
    decode_mac_frame,
    encode_mac_frame,
    frame_airtime,
    mac_payload_budget,
)
from .gateway import (
    AppHeader,
    Gateway,
    GatewayError,
    GatewayMode,
    NwkFrame,
    NWK_BROADCAST_SHORT,
)
from .ipv6 import (
    NEXT_HEADER_UDP,
    Ipv6Packet,
    PacketError,
    UdpDatagram,
    decode_udp,
    encode_udp,
    udp_checksum,
)
from .reassembly import FragmentOutcome, FragmentationContext, ReassemblyError, accept_fragment, fragment

BC0_CACHE_ENTRIES = 64
DEFAULT_WIRED_DELAY = 0.001


class NodeRole(Enum):
    COORDINATOR = "coordinator"
    FFD = "ffd"
    RFD = "rfd"

    @property
    def forwards(self) -> bool:
        return self is not NodeRole.RFD


@dataclass(frozen=True)
class SleepSchedule:
    """Periodic awake/asleep cycle starting awake at t=0."""

    awake: float
    asleep: float

    def is_awake(self, t: float) -> bool:
        return t % (self.awake + self.asleep) < self.awake


@dataclass(frozen=True)
class SimLink:
    a: str
    b: str
    band: PhyBand = PhyBand.B2450
    loss_probability: float = 0.0


@dataclass(frozen=True)
class TraceRecord:
    time: float
    node: str
    kind: str
    detail: str = ""
    nbytes: int = 0

    def line(self) -> str:
        return f"{self.time:.6f}\t{self.node}\t{self.kind}\t{self.detail}\t{self.nbytes}"


class SimNode:
    def __init__(
        self,
        node_id: str,
        role: NodeRole,
        pan_id: int,
        short: int,
        eui: bytes,
        sleep: SleepSchedule | None = None,
        security: SecurityMode = SecurityMode.NONE,
        stack: str = "lowpan",
    ):
        self.id = node_id
        self.role = role
        self.pan_id = pan_id
        self.short = short
        self.eui = eui
        self.sleep = sleep
        self.security = security
        self.stack = stack
        self.routes: dict[int, int] = {}
        self.default_route: int | None = None
        self.mac_seq = 0
        self.nwk_seq = 0
        self.bc0_seq = 0
        self.bc0_seen: OrderedDict = OrderedDict()
        self.tx_free_at = 0.0
        self.frag_ctx = FragmentationContext()
        self.reassembly: dict = {}
        self.received_packets: list[tuple[float, Ipv6Packet]] = []
        self.received_broadcasts: list[tuple[float, bytes]] = []
        self.received_app: list[tuple[float, bytes]] = []
        self.received_nwk: list[tuple[float, NwkFrame]] = []

    @property
    def wpan_address(self) -> Short16:
        return Short16(self.pan_id, self.short)

    @property
    def link_local(self) -> IPv6Address:
        return addressing.link_local(addressing.iid_for(self.wpan_address))

    def matches(self, addr: NodeAddress) -> bool:
        if isinstance(addr, Short16):
            return addr == self.wpan_address
        return isinstance(addr, Eui64) and addr.eui == self.eui

    def is_awake(self, t: float) -> bool:
        return self.sleep is None or self.sleep.is_awake(t)

    def note_broadcast(self, key) -> bool:
        """Record a flood key; returns False if it was already seen."""
        if key in self.bc0_seen:
            return False
        self.bc0_seen[key] = True
        while len(self.bc0_seen) > BC0_CACHE_ENTRIES:
            self.bc0_seen.popitem(last=False)
        return True


@dataclass
class WiredHost:
    id: str
    addr: IPv6Address

    def __post_init__(self):
        self.delivered: list[tuple[float, Ipv6Packet]] = []


def synth_eui(pan_id: int, short: int) -> bytes:
    """Deterministic EUI-64 for scenario nodes that do not pin one."""
    return b"\x00\x12\x4b\x00" + pan_id.to_bytes(2, "big") + short.to_bytes(2, "big")


class World:
    def __init__(
        self,
        seed: int = 0,
        pan_id: int = 0xBEEF,
        default_hops: int = 8,
        wired_delay: float = DEFAULT_WIRED_DELAY,
    ):
        self.rng = random.Random(seed)
        self.pan_id = pan_id
        self.default_hops = default_hops
        self.wired_delay = wired_delay
        self.now = 0.0
        self.nodes: dict[str, SimNode] = {}
        self.by_addr: dict[tuple[int, int], SimNode] = {}
        self.links: dict[tuple[str, str], SimLink] = {}
        self.neighbors: dict[str, list[str]] = {}
        self.gateways: dict[str, Gateway] = {}
        self.hosts: dict[str, WiredHost] = {}
        self.host_by_addr: dict[IPv6Address, WiredHost] = {}
        self.trace: list[TraceRecord] = []
        self.metrics: dict[str, float] = {}
        self._queue: list = []
        self._event_seq = 0
        self._prepared = False

    # --- construction ---------------------------------------------------

    def add_node(
        self,
        node_id: str,
        role: NodeRole = NodeRole.FFD,
        short: int = 0,
        *,
        eui: bytes | None = None,
        pan_id: int | None = None,
        sleep: SleepSchedule | None = None,
        security: SecurityMode = SecurityMode.NONE,
        stack: str = "lowpan",
    ) -> SimNode:
        pan = self.pan_id if pan_id is None else pan_id
        if node_id in self.nodes or node_id in self.hosts:
            raise ValueError(f"duplicate id {node_id!r}")
        if (pan, short) in self.by_addr:
            raise ValueError(f"short 0x{short:04X} already used in PAN 0x{pan:04X}")
        node = SimNode(
            node_id, role, pan, short,
            eui if eui is not None else synth_eui(pan, short),
            sleep, security, stack,
        )
        self.nodes[node_id] = node
        self.by_addr[(pan, short)] = node
        self.neighbors.setdefault(node_id, [])
        return node

    def add_gateway(
        self,
        node_id: str,
        short: int,
        mode: GatewayMode,
        wired_addr: IPv6Address,
        *,
        prefix: IPv6Address | None = None,
        pan_id: int | None = None,
        subscribers: tuple[IPv6Address, ...] = (),
        tunnel_peer: IPv6Address | None = None,
        discovery_ttl: float | None = None,
    ) -> Gateway:
        pan = self.pan_id if pan_id is None else pan_id
        stack = {
            GatewayMode.BORDER: "lowpan",
            GatewayMode.DEVID: "app",
            GatewayMode.ZIGBEE: "nwk",
            GatewayMode.BRIDGE: "nwk",
        }[mode]
        self.add_node(node_id, NodeRole.FFD, short, pan_id=pan, stack=stack)
        gw = Gateway(
            mode=mode,
            pan_id=pan,
            short=short,
            wired_addr=wired_addr,
            prefix=prefix,
            subscribers=subscribers,
            tunnel_peer=tunnel_peer,
        )
        if discovery_ttl is not None:
            gw.discovery.ttl = discovery_ttl
        self.gateways[node_id] = gw
        return gw

    def add_host(self, host_id: str, addr: IPv6Address) -> WiredHost:
        if host_id in self.hosts or host_id in self.nodes:
            raise ValueError(f"duplicate id {host_id!r}")
        host = WiredHost(host_id, addr)
        self.hosts[host_id] = host
        self.host_by_addr[addr] = host
        return host

    def add_link(
        self, a: str, b: str, band: PhyBand = PhyBand.B2450, loss: float = 0.0
    ) -> SimLink:
        for end in (a, b):
            if end not in self.nodes:
                raise ValueError(f"unknown node {end!r}")
        link = SimLink(a, b, band, loss)
        self.links[(a, b)] = link
        self.links[(b, a)] = link
        if b not in self.neighbors[a]:
            self.neighbors[a].append(b)
        if a not in self.neighbors[b]:
            self.neighbors[b].append(a)
        return link

    def node(self, node_id: str) -> SimNode:
        return self.nodes[node_id]

    def host(self, host_id: str) -> WiredHost:
        return self.hosts[host_id]

    def gateway(self, node_id: str) -> Gateway:
        return self.gateways[node_id]

    # --- static routing ---------------------------------------------------

    def segment_gateway(self, pan_id: int) -> tuple[str, Gateway] | None:
        for gw_id in sorted(self.gateways):
            if self.gateways[gw_id].pan_id == pan_id:
                return gw_id, self.gateways[gw_id]
        return None

    def compute_routes(self):
        """Hop-count shortest paths, forwarding only through FFDs.

        Fills in any route not already pinned by the scenario; the
        default route points toward the segment gateway when one exists.
        """
        for src_id in sorted(self.nodes):
            src = self.nodes[src_id]
            first_hop: dict[str, str] = {}
            frontier = [src_id]
            seen = {src_id}
            while frontier:
                next_frontier = []
                for u in frontier:
                    if u != src_id and not self.nodes[u].role.forwards:
                        continue  # targets, never transit
                    for v in sorted(self.neighbors.get(u, [])):
                        if v in seen or self.nodes[v].pan_id != src.pan_id:
                            continue
                        seen.add(v)
                        first_hop[v] = v if u == src_id else first_hop[u]
                        next_frontier.append(v)
                frontier = next_frontier
            for dst_id, hop_id in first_hop.items():
                src.routes.setdefault(self.nodes[dst_id].short, self.nodes[hop_id].short)
            entry = self.segment_gateway(src.pan_id)
            if entry is not None and src.default_route is None:
                gw_id, gw = entry
                if gw_id != src_id:
                    src.default_route = src.routes.get(gw.short)

    def prepare(self):
        """Finalize routing and gateway registrations before the first event."""
        if self._prepared:
            return
        self._prepared = True
        self.compute_routes()
        for gw_id in sorted(self.gateways):
            gw = self.gateways[gw_id]
            if gw.mode in (GatewayMode.ZIGBEE, GatewayMode.BRIDGE):
                for (pan, short), node in sorted(self.by_addr.items()):
                    if pan == gw.pan_id and node.id != gw_id:
                        gw.mapping.register_node(node.eui, short)

    def node_global(self, node_id: str) -> IPv6Address:
        """Delegated-prefix global address of a node (short-derived IID)."""
        node = self.nodes[node_id]
        entry = self.segment_gateway(node.pan_id)
        if entry is None or entry[1].prefix is None:
            raise ValueError(f"segment of {node_id!r} has no delegated prefix")
        return addressing.global_unicast(entry[1].prefix, addressing.iid_for(node.wpan_address))

    # --- event loop -------------------------------------------------------

    def schedule(self, t: float, fn):
        heapq.heappush(self._queue, (t, self._event_seq, fn))
        self._event_seq += 1

    def step(self) -> bool:
        if not self._queue:
            return False
        t, _, fn = heapq.heappop(self._queue)
        self.now = t
        fn()
        return True

    def run_until(self, t_end: float):
        self.prepare()
        while self._queue and self._queue[0][0] <= t_end:
            self.step()
        self.now = t_end

    def run(self):
        self.prepare()
        while self.step():
            pass

    def record(self, node: str, kind: str, detail: str = "", nbytes: int = 0):
        self.trace.append(TraceRecord(self.now, node, kind, detail, nbytes))

    def bump(self, key: str, amount: float = 1):
        self.metrics[key] = self.metrics.get(key, 0) + amount

    # --- traffic entry points ----------------------------------------------

    def send_udp(
        self,
        at: float,
        src_id: str,
        dst_id: str,
        sport: int,
        dport: int,
        payload: bytes,
        *,
        hops: int | None = None,
        src_addr: IPv6Address | None = None,
        dst_addr: IPv6Address | None = None,
    ):
        self.schedule(at, partial(self._do_send_udp, src_id, dst_id, sport, dport,
                                  payload, hops, src_addr, dst_addr))

    def _pick_addresses(self, src_id: str, dst_id: str) -> tuple[IPv6Address, IPv6Address]:
        wired_dst = dst_id in self.hosts or dst_id in self.gateways
        if src_id in self.hosts:
            src = self.hosts[src_id].addr
        elif wired_dst or self.nodes[dst_id].pan_id != self.nodes[src_id].pan_id:
            src = self.node_global(src_id)
        else:
            src = self.nodes[src_id].link_local
        if dst_id in self.hosts:
            dst = self.hosts[dst_id].addr
        elif dst_id in self.gateways:
            dst = self.gateways[dst_id].wired_addr
        elif src_id in self.hosts or self.nodes[src_id].pan_id != self.nodes[dst_id].pan_id:
            dst = self.node_global(dst_id)
        else:
            dst = self.nodes[dst_id].link_local
        return src, dst

    def _do_send_udp(self, src_id, dst_id, sport, dport, payload, hops, src_addr, dst_addr):
        src, dst = self._pick_addresses(src_id, dst_id)
        if src_addr is not None:
            src = src_addr
        if dst_addr is not None:
            dst = dst_addr
        udp = UdpDatagram(sport, dport, 0, payload)
        udp = UdpDatagram(sport, dport, udp_checksum(src, dst, udp), payload)
        pkt = Ipv6Packet(src=src, dst=dst, next_header=NEXT_HEADER_UDP, payload=encode_udp(udp))
        self.bump("sent")
        self.record(src_id, "send", f"kind=udp to={dst}", len(payload))
        if src_id in self.hosts:
            self.wired_send(src_id, pkt)
        else:
            self._node_send_ipv6(self.nodes[src_id], pkt, hops)

    def broadcast(self, at: float, src_id: str, payload: bytes, *, hops: int | None = None):
        self.schedule(at, partial(self._do_broadcast, src_id, payload, hops))

    def send_app(self, at: float, src_id: str, src_devid: int, dst_devid: int, data: bytes):
        self.schedule(at, partial(self._do_send_app, src_id, src_devid, dst_devid, data))

    def send_apl(self, at: float, src_id: str, dst_short: int, apl: bytes):
        self.schedule(at, partial(self._do_send_nwk, src_id, dst_short, apl))

    def send_nwk(self, at: float, src_id: str, dst_short: int, payload: bytes):
        self.schedule(at, partial(self._do_send_nwk, src_id, dst_short, payload))

    # --- 6LoWPAN node stack --------------------------------------------------

    def _resolve_final_short(self, node: SimNode, dst: IPv6Address) -> int | None:
        entry = self.segment_gateway(node.pan_id)
        gw = entry[1] if entry else None
        local = addressing.is_link_local(dst) or (gw is not None and gw.owns_prefix(dst))
        if local:
            return self._short_for_iid(node.pan_id, addressing.iid_of(dst))
        if gw is not None:
            return gw.short
        return None

    def _short_for_iid(self, pan_id: int, iid: bytes) -> int | None:
        for (pan, short), node in sorted(self.by_addr.items()):
            if pan != pan_id:
                continue
            if addressing.iid_for(node.wpan_address) == iid:
                return short
            if addressing.iid_from_eui64(node.eui) == iid:
                return short
        return None

    def _node_send_ipv6(self, node: SimNode, pkt: Ipv6Packet, hops: int | None = None):
        final_short = self._resolve_final_short(node, pkt.dst)
        if final_short is None:
            self.record(node.id, "drop", f"reason=no-such-node dst={pkt.dst}")
            self.bump("drops")
            self.bump("drops_no-such-node")
            return
        orig = node.wpan_address
        final = Short16(node.pan_id, final_short)
        stream = compress_ipv6(pkt, orig, final)
        self._note_compression(pkt, stream)
        mesh = encode_mesh(MeshHeader(orig, final, hops if hops is not None else self.default_hops))
        budget = mac_payload_budget(node.security) - len(mesh)
        try:
            pieces = fragment(stream, budget, node.frag_ctx)
        except ReassemblyError as exc:
            self._drop(node, _reason_token(exc), f"size={len(stream)}")
            return
        if len(pieces) > 1:
            self.record(
                node.id, "frag-start",
                f"size={len(stream)} frames={len(pieces)}", len(stream),
            )
            self.bump("fragments_tx", len(pieces))
        next_hop = node.routes.get(final_short, node.default_route)
        if next_hop is None:
            self.record(node.id, "drop", f"reason=no-route final=0x{final_short:04X}")
            self.bump("drops")
            self.bump("drops_no-route")
            return
        for piece in pieces:
            self._transmit(node, next_hop, mesh + piece)

    def _note_compression(self, pkt: Ipv6Packet, stream: bytes):
        app_octets = len(pkt.payload)
        uncompressed = 1 + 40 + len(pkt.payload)
        if pkt.next_header == NEXT_HEADER_UDP:
            try:
                app_octets = len(decode_udp(pkt.payload).payload)
                uncompressed = 1 + 40 + 8 + app_octets
            except PacketError:
                pass
        self.bump("header_octets", len(stream) - app_octets)
        self.bump("header_count")
        self.bump("stream_octets", len(stream))
        self.bump("uncompressed_octets", uncompressed)

    def _do_broadcast(self, src_id: str, payload: bytes, hops: int | None):
        node = self.nodes[src_id]
        seq = node.bc0_seq
        node.bc0_seq = (seq + 1) & 0xFF
        node.note_broadcast((node.wpan_address, seq))
        mesh = MeshHeader(
            node.wpan_address,
            Short16(node.pan_id, BROADCAST_SHORT),
            hops if hops is not None else self.default_hops,
        )
        data = encode_mesh(mesh) + encode_bc0(seq) + payload
        self.bump("bcast_sent")
        self.record(src_id, "send", f"kind=bc0 seq={seq}", len(payload))
        # the originating application keeps its own copy
        node.received_broadcasts.append((self.now, payload))
        self.record(src_id, "deliver", f"kind=bc0 seq={seq} from={src_id}", len(payload))
        self.bump("bcast_delivered")
        for neighbor in sorted(self.neighbors[src_id]):
            self._transmit(node, self.nodes[neighbor].short, data)

    def _do_send_app(self, src_id: str, src_devid: int, dst_devid: int, data: bytes):
        node = self.nodes[src_id]
        entry = self.segment_gateway(node.pan_id)
        if entry is None:
            self.record(src_id, "drop", "reason=no-route detail=no-translator")
            self.bump("drops")
            return
        payload = AppHeader(src_devid, dst_devid).encode() + data
        self.bump("sent")
        self.record(src_id, "send", f"kind=app devid={dst_devid}", len(data))
        self._transmit(node, entry[1].short, payload)

    def _do_send_nwk(self, src_id: str, dst_short: int, payload: bytes):
        node = self.nodes[src_id]
        frame = NwkFrame(
            dst_short=dst_short, src_short=node.short,
            sequence=node.nwk_seq, payload=payload,
        )
        node.nwk_seq = (node.nwk_seq + 1) & 0xFF
        self.bump("sent")
        self.record(src_id, "send", f"kind=nwk dst=0x{dst_short:04X}", len(payload))
        if dst_short == NWK_BROADCAST_SHORT:
            for neighbor in sorted(self.neighbors[src_id]):
                self._transmit(node, self.nodes[neighbor].short, frame.encode())
            return
        local = self.by_addr.get((node.pan_id, dst_short))
        if local is not None and (src_id, local.id) in self.links:
            self._transmit(node, dst_short, frame.encode())
            return
        entry = self.segment_gateway(node.pan_id)
        if entry is None:
            self.record(src_id, "drop", f"reason=no-route dst=0x{dst_short:04X}")
            self.bump("drops")
            return
        self._transmit(node, entry[1].short, frame.encode())

    # --- radio -----------------------------------------------------------------

    def _transmit(self, node: SimNode, dst_short: int, payload: bytes):
        dst_node = self.by_addr.get((node.pan_id, dst_short))
        if dst_node is None:
            self.record(node.id, "drop", f"reason=no-such-node dst=0x{dst_short:04X}")
            self.bump("drops")
            self.bump("drops_no-such-node")
            return
        link = self.links.get((node.id, dst_node.id))
        if link is None:
            self.record(node.id, "drop", f"reason=no-link dst={dst_node.id}")
            self.bump("drops")
            self.bump("drops_no-link")
            return
        frame = MacFrame(
            FrameType.DATA,
            node.mac_seq,
            src=node.wpan_address,
            dst=Short16(node.pan_id, dst_short),
            security=node.security,
            payload=payload,
        )
        node.mac_seq = (node.mac_seq + 1) & 0xFF
        psdu = encode_mac_frame(frame)
        airtime = frame_airtime(link.band, PHY_OVERHEAD + len(psdu))
        start = max(self.now, node.tx_free_at)
        node.tx_free_at = start + airtime
        self.schedule(start, partial(self._tx_event, node, dst_node, link, psdu, airtime))

    def _tx_event(self, node: SimNode, dst_node: SimNode, link: SimLink, psdu: bytes, airtime: float):
        ppdu_octets = PHY_OVERHEAD + len(psdu)
        if not node.is_awake(self.now):
            self.record(node.id, "drop", "reason=asleep dir=tx", ppdu_octets)
            self.bump("drops")
            self.bump("drops_asleep")
            return
        self.record(node.id, "tx", f"dst={dst_node.id}", ppdu_octets)
        self.bump("frames_tx")
        if self.rng.random() < link.loss_probability:
            self.schedule(self.now + airtime, partial(self._loss_event, dst_node, ppdu_octets))
        else:
            self.schedule(self.now + airtime, partial(self._rx_event, dst_node, psdu))

    def _loss_event(self, dst_node: SimNode, ppdu_octets: int):
        self.record(dst_node.id, "drop", "reason=loss", ppdu_octets)
        self.bump("drops")
        self.bump("drops_loss")

    def _rx_event(self, node: SimNode, psdu: bytes):
        if not node.is_awake(self.now):
            self.record(node.id, "drop", "reason=asleep dir=rx", PHY_OVERHEAD + len(psdu))
            self.bump("drops")
            self.bump("drops_asleep")
            return
        try:
            frame = decode_mac_frame(psdu)
        except FrameError as exc:
            self._drop(node, "malformed-frame", str(exc))
            return
        src = f"0x{frame.src.short:04X}" if isinstance(frame.src, Short16) else "?"
        self.record(node.id, "rx", f"src={src}", PHY_OVERHEAD + len(psdu))
        self.bump("frames_rx")
        if node.stack == "lowpan":
            self._rx_lowpan(node, frame)
        elif node.stack == "app":
            self._rx_app(node, frame)
        elif node.stack == "nwk":
            self._rx_nwk(node, frame)

    def _drop(self, node: SimNode, reason: str, extra: str = ""):
        detail = f"reason={reason}" + (f" {extra}" if extra else "")
        self.record(node.id, "drop", detail)
        self.bump("drops")
        self.bump(f"drops_{reason}")

    # --- receive paths ------------------------------------------------------

    def _rx_lowpan(self, node: SimNode, frame: MacFrame):
        data = frame.payload
        if not data:
            self._drop(node, "empty-payload")
            return
        orig: NodeAddress = frame.src
        final: NodeAddress = frame.dst
        try:
            kind = parse_dispatch(data[0])
            if kind is DispatchKind.MESH:
                mesh, consumed = decode_mesh(data, node.pan_id)
                rest = data[consumed:]
                if isinstance(mesh.final, Short16) and mesh.final.short == BROADCAST_SHORT:
                    self._rx_flood(node, mesh, rest)
                    return
                if not node.matches(mesh.final):
                    self._forward(node, mesh, rest)
                    return
                if not rest:
                    self._drop(node, "empty-payload")
                    return
                orig, final = mesh.originator, mesh.final
                data = rest
                kind = parse_dispatch(data[0])
            if kind in (DispatchKind.FRAG_FIRST, DispatchKind.FRAG_SUBSEQUENT):
                result = accept_fragment(node.reassembly, orig, data, self.now)
                if result.outcome is FragmentOutcome.DROPPED:
                    self._drop(node, "timeout", "stage=reassembly")
                    return
                if result.outcome is FragmentOutcome.PENDING:
                    return
                data = result.datagram
                self.record(node.id, "reasm-complete", f"size={len(data)}", len(data))
                self.bump("reassemblies")
                kind = parse_dispatch(data[0])
            if kind in (DispatchKind.HC1, DispatchKind.UNCOMPRESSED_IPV6):
                pkt = decompress_ipv6(data, orig, final)
                self._deliver_packet(node, pkt)
            else:
                self._drop(node, "unknown-dispatch", f"byte=0x{data[0]:02X}")
        except (CodecError, ReassemblyError) as exc:
            self._drop(node, "codec-error", f"kind={type(exc).__name__}")

    def _forward(self, node: SimNode, mesh: MeshHeader, rest: bytes):
        if not node.role.forwards:
            self._drop(node, "not-forwarder")
            return
        hops = mesh.hops_left - 1
        if hops == 0:
            self._drop(node, "hops-exhausted")
            return
        if not isinstance(mesh.final, Short16):
            self._drop(node, "no-route", "detail=eui-final")
            return
        next_hop = node.routes.get(mesh.final.short, node.default_route)
        if next_hop is None:
            self._drop(node, "no-route", f"final=0x{mesh.final.short:04X}")
            return
        self.record(node.id, "forward", f"final=0x{mesh.final.short:04X} hops={hops}")
        self._transmit(node, next_hop, encode_mesh(MeshHeader(mesh.originator, mesh.final, hops)) + rest)

    def _rx_flood(self, node: SimNode, mesh: MeshHeader, rest: bytes):
        seq, consumed = decode_bc0(rest)
        payload = rest[consumed:]
        if not node.note_broadcast((mesh.originator, seq)):
            self._drop(node, "duplicate", f"seq={seq}")
            return
        node.received_broadcasts.append((self.now, payload))
        self.record(node.id, "deliver", f"kind=bc0 seq={seq}", len(payload))
        self.bump("bcast_delivered")
        gw = self.gateways.get(node.id)
        if gw is not None and gw.subscribers:
            for pkt in gw.relay_broadcast(payload):
                self.record(node.id, "gw-translate", f"mode={gw.mode.value} dir=bcast dst={pkt.dst}")
                self.wired_send(node.id, pkt)
        if node.role.forwards and mesh.hops_left - 1 > 0:
            fwd = encode_mesh(MeshHeader(mesh.originator, mesh.final, mesh.hops_left - 1))
            self.record(node.id, "forward", f"final=bcast hops={mesh.hops_left - 1}")
            for neighbor in sorted(self.neighbors[node.id]):
                self._transmit(node, self.nodes[neighbor].short, fwd + rest)

    def _deliver_packet(self, node: SimNode, pkt: Ipv6Packet):
        gw = self.gateways.get(node.id)
        if gw is not None:
            if gw.mode is GatewayMode.BORDER:
                self.record(node.id, "gw-translate", f"mode=border dir=up dst={pkt.dst}")
                self.bump("gw_translations")
                self.wired_send(node.id, pkt)
            else:
                self._drop(node, "unsupported-mode", f"mode={gw.mode.value}")
            return
        node.received_packets.append((self.now, pkt))
        self.record(node.id, "deliver", f"kind=ipv6 from={pkt.src}", pkt.payload_length)
        self.bump("delivered")

    def _rx_app(self, node: SimNode, frame: MacFrame):
        gw = self.gateways.get(node.id)
        if gw is None:
            node.received_app.append((self.now, frame.payload))
            self.record(node.id, "deliver", "kind=app", len(frame.payload))
            self.bump("delivered")
            return
        try:
            pkt = gw.devid_uplink(frame.payload)
        except GatewayError as exc:
            self._drop(node, _reason_token(exc))
            return
        self.record(node.id, "gw-translate", f"mode=devid dir=up dst={pkt.dst}")
        self.bump("gw_translations")
        self.wired_send(node.id, pkt)

    def _rx_nwk(self, node: SimNode, frame: MacFrame):
        try:
            nwk = NwkFrame.decode(frame.payload)
        except GatewayError:
            self._drop(node, "malformed-nwk")
            return
        gw = self.gateways.get(node.id)
        if gw is None:
            if nwk.dst_short in (node.short, NWK_BROADCAST_SHORT):
                node.received_nwk.append((self.now, nwk))
                self.record(node.id, "deliver", f"kind=nwk src=0x{nwk.src_short:04X}", len(nwk.payload))
                self.bump("delivered")
            else:
                self._drop(node, "nwk-not-mine", f"dst=0x{nwk.dst_short:04X}")
            return
        try:
            if gw.mode is GatewayMode.ZIGBEE:
                for pkt in gw.zigbee_uplink(nwk):
                    self.record(node.id, "gw-translate", f"mode=zigbee dir=up dst={pkt.dst}")
                    self.bump("gw_translations")
                    self.wired_send(node.id, pkt)
            elif gw.mode is GatewayMode.BRIDGE:
                pkt = gw.bridge_uplink(nwk)
                self.record(node.id, "gw-translate", f"mode=bridge dir=up dst={pkt.dst}")
                self.bump("gw_translations")
                self.wired_send(node.id, pkt)
            else:
                self._drop(node, "unsupported-mode", f"mode={gw.mode.value}")
        except GatewayError as exc:
            self._drop(node, _reason_token(exc))

    # --- wired domain ---------------------------------------------------------

    def wired_send(self, origin_id: str, pkt: Ipv6Packet):
        self.record(origin_id, "wired-tx", f"dst={pkt.dst} nh={pkt.next_header}", pkt.payload_length)
        self.bump("wired_tx")
        self.schedule(self.now + self.wired_delay, partial(self._wired_rx, pkt))

    def _wired_rx(self, pkt: Ipv6Packet):
        host = self.host_by_addr.get(pkt.dst)
        if host is not None:
            host.delivered.append((self.now, pkt))
            self.record(host.id, "wired-rx", f"src={pkt.src} nh={pkt.next_header}", pkt.payload_length)
            self.record(host.id, "deliver", f"kind=ipv6 from={pkt.src}", pkt.payload_length)
            self.bump("delivered")
            return
        for gw_id in sorted(self.gateways):
            gw = self.gateways[gw_id]
            if pkt.dst == gw.wired_addr or gw.owns_prefix(pkt.dst):
                self.record(gw_id, "wired-rx", f"src={pkt.src} nh={pkt.next_header}", pkt.payload_length)
                self._gateway_downlink(gw_id, gw, pkt)
                return
        self.record("wired", "drop", f"reason=no-wired-route dst={pkt.dst}")
        self.bump("drops")
        self.bump("drops_no-wired-route")

    def _gateway_downlink(self, gw_id: str, gw: Gateway, pkt: Ipv6Packet):
        node = self.nodes[gw_id]
        try:
            if gw.mode is GatewayMode.BORDER:
                if not gw.owns_prefix(pkt.dst):
                    self._drop(node, "no-such-node", f"dst={pkt.dst}")
                    return
                self.record(gw_id, "gw-translate", f"mode=border dir=down dst={pkt.dst}")
                self.bump("gw_translations")
                self._node_send_ipv6(node, pkt)
            elif gw.mode is GatewayMode.DEVID:
                endpoint, payload = gw.devid_downlink(pkt, node.security)
                self.record(gw_id, "gw-translate", f"mode=devid dir=down dst=0x{endpoint.short:04X}")
                self.bump("gw_translations")
                self._transmit(node, endpoint.short, payload)
            elif gw.mode is GatewayMode.ZIGBEE:
                nwk = gw.zigbee_downlink(pkt, node.nwk_seq)
                node.nwk_seq = (node.nwk_seq + 1) & 0xFF
                self.record(gw_id, "gw-translate", f"mode=zigbee dir=down dst=0x{nwk.dst_short:04X}")
                self.bump("gw_translations")
                self._transmit(node, nwk.dst_short, nwk.encode())
            elif gw.mode is GatewayMode.BRIDGE:
                nwk = gw.bridge_downlink(pkt)
                self.record(gw_id, "gw-translate", f"mode=bridge dir=down dst=0x{nwk.dst_short:04X}")
                self.bump("gw_translations")
                self._transmit(node, nwk.dst_short, nwk.encode())
        except (GatewayError, PacketError) as exc:
            self._drop(node, _reason_token(exc))

    # --- reporting --------------------------------------------------------------

    def trace_lines(self) -> list[str]:
        return [record.line() for record in self.trace]

    def metrics_lines(self) -> list[str]:
        out = dict(self.metrics)
        sent = out.get("sent", 0)
        delivered = out.get("delivered", 0)
        out["delivery_ratio"] = delivered / sent if sent else 1.0
        if out.get("header_count"):
            out["mean_header_overhead"] = out["header_octets"] / out["header_count"]
            out["compression_ratio"] = out["stream_octets"] / out["uncompressed_octets"]
        lines = []
        for key in sorted(out):
            value = out[key]
            if isinstance(value, float) and not value.is_integer():
                lines.append(f"{key}={value:.6f}")
            else:
                lines.append(f"{key}={int(value)}")
        return lines


def _reason_token(exc: Exception) -> str:
    """Stable kebab-case trace token for a gateway/codec error class."""
    name = type(exc).__name__
    out = [name[0].lower()]
    for ch in name[1:]:
        if ch.isupper():
            out.append("-")
            out.append(ch.lower())
        else:
            out.append(ch)
    return "".join(out)
