from ipaddress import IPv6Address

import pytest

from lowpan import addressing
from lowpan.codec import UnknownDispatch
from lowpan.frame import Short16, mac_payload_budget, SecurityMode
from lowpan.gateway import (
    APL_MAX_OCTETS,
    AplTooLarge,
    AppHeader,
    DuplicateDevid,
    Gateway,
    GatewayMode,
    MappingTable,
    NoFragmentation,
    NoSuchNode,
    NotTunnelTraffic,
    NwkFrame,
    PoolExhausted,
    ServiceQuery,
    StaleRecord,
    TrafficClass,
    UnknownDevid,
    UnknownPanId,
    bridge_decapsulate,
    bridge_encapsulate,
    demux,
    lowpan_to_wired,
    pad_transform,
    register_devid,
    resolve_devid,
    strip_transform,
    wired_to_lowpan,
)
from lowpan.ipv6 import NEXT_HEADER_UDP, Ipv6Packet, UdpDatagram, decode_udp, encode_udp
from lowpan.netsim import NodeRole, World
from lowpan.reassembly import FragmentationContext

PREFIX_A = IPv6Address("2001:db8:a::")
PREFIX_B = IPv6Address("2001:db8:b::")
WIRED_A = IPv6Address("fd00::a")
WIRED_B = IPv6Address("fd00::b")
HOST_ADDR = IPv6Address("fd00::99")


# --- demux ---------------------------------------------------------------

def test_demux_examples():
    assert demux(b"\x09\x00\x00") is TrafficClass.ZIGBEE_NWK
    assert demux(b"\x42\xfb\x40") is TrafficClass.LOWPAN
    assert demux(b"\x41") is TrafficClass.LOWPAN
    assert demux(b"\x7f") is TrafficClass.LOWPAN  # recognized, if unsupported
    with pytest.raises(UnknownDispatch):
        demux(b"\x7a\x00")
    with pytest.raises(UnknownDispatch):
        demux(b"")


# --- devid registry ---------------------------------------------------------

def test_register_and_resolve():
    registry = {}
    register_devid(registry, 7, Short16(0xBEEF, 0x0010))
    assert resolve_devid(registry, 7) == Short16(0xBEEF, 0x0010)


def test_duplicate_devid():
    registry = {}
    register_devid(registry, 7, Short16(0xBEEF, 0x0010))
    with pytest.raises(DuplicateDevid):
        register_devid(registry, 7, HOST_ADDR)


def test_unknown_devid():
    with pytest.raises(UnknownDevid):
        resolve_devid({}, 9)


def _devid_gateway() -> Gateway:
    gw = Gateway(mode=GatewayMode.DEVID, pan_id=0xBEEF, short=0x00FE, wired_addr=WIRED_A)
    register_devid(gw.registry, 1, Short16(0xBEEF, 0x0010))
    register_devid(gw.registry, 9, HOST_ADDR)
    return gw


def test_devid_uplink_payload_verbatim():
    gw = _devid_gateway()
    app_frame = AppHeader(1, 9).encode() + b"reading=42"
    pkt = gw.devid_uplink(app_frame)
    assert pkt.src == WIRED_A  # the IP stack terminates at the gateway
    assert pkt.dst == HOST_ADDR
    assert decode_udp(pkt.payload).payload == app_frame


def test_devid_downlink_payload_verbatim():
    gw = _devid_gateway()
    app_frame = AppHeader(9, 1).encode() + b"set=on"
    udp = UdpDatagram(5, 5, 0, app_frame)
    pkt = Ipv6Packet(src=HOST_ADDR, dst=WIRED_A, payload=encode_udp(udp))
    endpoint, payload = gw.devid_downlink(pkt)
    assert endpoint == Short16(0xBEEF, 0x0010)
    assert payload == app_frame


def test_devid_downlink_no_fragmentation():
    gw = _devid_gateway()
    app_frame = AppHeader(9, 1).encode() + bytes(200)
    udp = UdpDatagram(5, 5, 0, app_frame)
    pkt = Ipv6Packet(src=HOST_ADDR, dst=WIRED_A, payload=encode_udp(udp))
    with pytest.raises(NoFragmentation):
        gw.devid_downlink(pkt)
    # boundary: exactly the budget still passes
    exact = AppHeader(9, 1).encode() + bytes(mac_payload_budget(SecurityMode.NONE) - 4)
    pkt = Ipv6Packet(src=HOST_ADDR, dst=WIRED_A, payload=encode_udp(UdpDatagram(5, 5, 0, exact)))
    endpoint, payload = gw.devid_downlink(pkt)
    assert len(payload) == mac_payload_budget(SecurityMode.NONE)


def test_devid_downlink_unknown():
    gw = _devid_gateway()
    udp = UdpDatagram(5, 5, 0, AppHeader(9, 77).encode())
    pkt = Ipv6Packet(src=HOST_ADDR, dst=WIRED_A, payload=encode_udp(udp))
    with pytest.raises(UnknownDevid):
        gw.devid_downlink(pkt)


# --- pseudo addresses and short pool ---------------------------------------

def test_assign_pseudo_is_raw_concatenation():
    table = MappingTable(prefix=IPv6Address("2001:db8::"))
    ext = bytes.fromhex("00124b0001020304")
    pseudo = table.assign_pseudo(ext)
    assert pseudo == IPv6Address("2001:db8::12:4b00:102:304")  # no U/L bit flip
    assert table.assign_pseudo(ext) == pseudo  # idempotent
    assert table.ext_for_pseudo(pseudo) == ext


def test_ext_for_pseudo_unknown():
    table = MappingTable(prefix=PREFIX_A)
    with pytest.raises(NoSuchNode):
        table.ext_for_pseudo(IPv6Address("2001:db8:b::1"))  # wrong prefix
    with pytest.raises(NoSuchNode):
        table.ext_for_pseudo(IPv6Address("2001:db8:a::1"))  # never assigned


def test_short_pool():
    table = MappingTable(prefix=PREFIX_A, short_pool=[0x8000])
    first = table.assign_short(HOST_ADDR)
    assert table.assign_short(HOST_ADDR) == first  # idempotent while held
    with pytest.raises(PoolExhausted):
        table.assign_short(IPv6Address("fd00::2"))
    table.release_short(HOST_ADDR)
    assert table.assign_short(IPv6Address("fd00::2")) == first


# --- pad / strip ---------------------------------------------------------------

def test_pad_strip_roundtrip_all_sizes():
    for n in range(APL_MAX_OCTETS + 1):
        data = bytes((i * 3 + n) & 0xFF for i in range(n))
        block = pad_transform(data)
        assert len(block) == 1240
        assert strip_transform(block) == data


def test_pad_rejects_95():
    pad_transform(bytes(94))
    with pytest.raises(AplTooLarge):
        pad_transform(bytes(95))


def test_pad_handles_trailing_zero_data():
    # the length prefix disambiguates payloads that end in zeros
    data = b"\x01\x00\x00\x00"
    assert strip_transform(pad_transform(data)) == data


def test_strip_rejects_bad_prefix():
    with pytest.raises(Exception):
        strip_transform(b"")
    with pytest.raises(Exception):
        strip_transform(bytes([50]) + bytes(10))  # shorter than the prefix claims


# --- bridge tunnelling ------------------------------------------------------------

def test_bridge_roundtrip():
    nwk = NwkFrame(dst_short=0x0020, src_short=0x0010, sequence=3, payload=b"apl-data")
    pkt = bridge_encapsulate(nwk, (WIRED_A, WIRED_B))
    assert pkt.src == WIRED_A and pkt.dst == WIRED_B
    assert bridge_decapsulate(pkt) == nwk


def test_bridge_rejects_non_tunnel():
    nwk = NwkFrame(dst_short=1, src_short=2)
    pkt = bridge_encapsulate(nwk, (WIRED_A, WIRED_B))
    udp = decode_udp(pkt.payload)
    other = UdpDatagram(udp.src_port, 9999, udp.checksum, udp.payload)
    with pytest.raises(NotTunnelTraffic):
        bridge_decapsulate(
            Ipv6Packet(src=pkt.src, dst=pkt.dst, payload=encode_udp(other))
        )
    with pytest.raises(NotTunnelTraffic):
        bridge_decapsulate(Ipv6Packet(src=WIRED_A, dst=WIRED_B, next_header=58, payload=b""))


def test_nwk_frame_classifies_as_not_lowpan():
    nwk = NwkFrame(dst_short=1, src_short=2)
    assert demux(nwk.encode()) is TrafficClass.ZIGBEE_NWK
    with pytest.raises(ValueError):
        NwkFrame(dst_short=1, src_short=2, frame_control=0xC000)


# --- discovery ----------------------------------------------------------------------

def test_discovery_roundtrip_within_ttl():
    gw = Gateway(mode=GatewayMode.ZIGBEE, pan_id=0xABCD, short=0xFE, wired_addr=WIRED_A)
    gw.query_to_segment(ServiceQuery(0xABCD, HOST_ADDR), now=0.0)
    assert gw.route_response(0xABCD, now=59.0) == [HOST_ADDR]


def test_discovery_stale_after_ttl():
    gw = Gateway(mode=GatewayMode.ZIGBEE, pan_id=0xABCD, short=0xFE, wired_addr=WIRED_A)
    gw.query_to_segment(ServiceQuery(0xABCD, HOST_ADDR), now=0.0)
    with pytest.raises(StaleRecord):
        gw.route_response(0xABCD, now=61.0)


def test_discovery_unknown_pan():
    gw = Gateway(mode=GatewayMode.ZIGBEE, pan_id=0xABCD, short=0xFE, wired_addr=WIRED_A)
    with pytest.raises(UnknownPanId):
        gw.query_to_segment(ServiceQuery(0x1111, HOST_ADDR), now=0.0)


def test_discovery_two_way():
    gw = Gateway(mode=GatewayMode.ZIGBEE, pan_id=0xABCD, short=0xFE, wired_addr=WIRED_A)
    gw.query_to_wired(ServiceQuery(0xABCD, 0x0010), now=0.0)  # node short asks outward
    assert gw.route_response(0xABCD, now=10.0) == [0x0010]


# --- adaptation pipeline --------------------------------------------------------------

def test_pipeline_inverse():
    orig = Short16(0xBEEF, 0x00FE)
    final = Short16(0xBEEF, 0x0010)
    dst = addressing.link_local(addressing.iid_for(final))
    udp = UdpDatagram(0xF0B3, 0xF0B4, 0x1234, bytes(range(256)) * 4)
    pkt = Ipv6Packet(
        src=IPv6Address("2001:db8::1"), dst=dst,
        next_header=NEXT_HEADER_UDP, payload=encode_udp(udp),
    )
    frames = wired_to_lowpan(pkt, orig, final, FragmentationContext())
    assert len(frames) > 1
    assert lowpan_to_wired(frames, 0xBEEF) == pkt


# --- border gateway end to end ----------------------------------------------------------

def border_world(seed=0):
    """RFD - f1 - f2 - border gateway - wired host (3 mesh hops)."""
    world = World(seed=seed, pan_id=0xAAAA)
    world.add_node("rfd", NodeRole.RFD, 0x0010)
    world.add_node("f1", NodeRole.FFD, 0x0002)
    world.add_node("f2", NodeRole.FFD, 0x0003)
    world.add_gateway("gw", 0x00FE, GatewayMode.BORDER, WIRED_A, prefix=PREFIX_A)
    world.add_host("h1", HOST_ADDR)
    world.add_link("rfd", "f1")
    world.add_link("f1", "f2")
    world.add_link("f2", "gw")
    return world


def test_border_uplink_byte_identical():
    world = border_world()
    payload = bytes((7 * i + 1) & 0xFF for i in range(40))
    world.send_udp(0.0, "rfd", "h1", 0xF0B3, 0xF0BF, payload)
    world.run()
    delivered = world.host("h1").delivered
    assert len(delivered) == 1
    pkt = delivered[0][1]
    assert decode_udp(pkt.payload).payload == payload
    assert pkt.src == world.node_global("rfd")  # end-to-end addresses survive
    assert any(r.kind == "gw-translate" and "dir=up" in r.detail for r in world.trace)


def test_border_downlink_1280_fragment_roundtrip():
    world = border_world()
    data = bytes((i * 13 + 7) & 0xFF for i in range(1232))
    world.send_udp(0.0, "h1", "rfd", 0xF0B3, 0xF0B4, data)  # 1280-octet IPv6 packet
    world.run()
    packets = world.node("rfd").received_packets
    assert len(packets) == 1
    pkt = packets[0][1]
    assert len(pkt.payload) + 40 == 1280
    assert decode_udp(pkt.payload).payload == data
    assert pkt.src == HOST_ADDR and pkt.dst == world.node_global("rfd")
    frag_starts = [r for r in world.trace if r.kind == "frag-start"]
    assert len(frag_starts) == 1 and frag_starts[0].node == "gw"
    assert any(r.kind == "reasm-complete" and r.node == "rfd" for r in world.trace)


def test_border_downlink_fragment_count_matches_arithmetic():
    world = border_world()
    data = bytes(1232)
    world.send_udp(0.0, "h1", "rfd", 0xF0B3, 0xF0B4, data)
    world.run()
    # stream: dispatch + HC1 + hop limit + 16-octet src inline + 8-octet
    # prefix + 4-octet HC2 header + UDP payload
    stream_len = 3 + 16 + 8 + 4 + 1232
    budget = 102 - 5  # short-address mesh header rides outside the budget
    first = (budget - 4) // 8 * 8
    sub = (budget - 5) // 8 * 8
    expected = 1 + -(-(stream_len - first) // sub)
    frames = [r for r in world.trace if r.kind == "tx" and r.node == "gw"]
    assert len(frames) == expected


def test_border_unknown_destination():
    world = border_world()
    world.send_udp(0.0, "h1", "rfd", 1, 2, b"x",
                   dst_addr=IPv6Address("2001:db8:a::dead"))
    world.run()
    assert world.node("rfd").received_packets == []
    assert any("reason=no-such-node" in r.detail for r in world.trace if r.kind == "drop")


def test_border_downlink_oversize_stream_drops():
    # a wired packet whose compressed stream exceeds the 11-bit size field
    world = border_world()
    world.send_udp(0.0, "h1", "rfd", 1, 2, bytes(2100))
    world.run()
    assert world.node("rfd").received_packets == []
    assert any("datagram-too-large" in r.detail for r in world.trace if r.kind == "drop")


def test_border_broadcast_relay_to_subscribers():
    world = World(seed=0, pan_id=0xAAAA)
    world.add_node("c", NodeRole.COORDINATOR, 0x0001)
    world.add_host("h1", HOST_ADDR)
    world.add_host("h2", IPv6Address("fd00::98"))
    world.add_gateway(
        "gw", 0x00FE, GatewayMode.BORDER, WIRED_A, prefix=PREFIX_A,
        subscribers=(HOST_ADDR, IPv6Address("fd00::98")),
    )
    world.add_link("c", "gw")
    world.broadcast(0.0, "c", b"alarm")
    world.run()
    for host_id in ("h1", "h2"):
        delivered = world.host(host_id).delivered
        assert len(delivered) == 1
        assert decode_udp(delivered[0][1].payload).payload == b"alarm"


# --- cross-region scenarios ------------------------------------------------------------

def two_region_world(mode: GatewayMode, seed=0) -> World:
    world = World(seed=seed)
    world.add_node("x", NodeRole.FFD, 0x0010, pan_id=0xAAAA,
                   stack={"border": "lowpan", "devid": "app"}.get(mode.value, "nwk"))
    world.add_gateway("ga", 0x00FE, mode, WIRED_A, prefix=PREFIX_A, pan_id=0xAAAA,
                      tunnel_peer=WIRED_B)
    world.add_node("y", NodeRole.FFD, 0x0020, pan_id=0xBBBB,
                   stack={"border": "lowpan", "devid": "app"}.get(mode.value, "nwk"))
    world.add_gateway("gb", 0x00FD, mode, WIRED_B, prefix=PREFIX_B, pan_id=0xBBBB,
                      tunnel_peer=WIRED_A)
    world.add_link("x", "ga")
    world.add_link("y", "gb")
    return world


def test_cross_region_border_passes():
    world = two_region_world(GatewayMode.BORDER)
    payload = b"cross-region"
    world.send_udp(0.0, "x", "y", 0xF0B3, 0xF0B4, payload)
    world.run()
    packets = world.node("y").received_packets
    assert len(packets) == 1
    assert decode_udp(packets[0][1].payload).payload == payload
    assert packets[0][1].src == world.node_global("x")


def test_cross_region_devid_fails():
    world = two_region_world(GatewayMode.DEVID)
    register_devid(world.gateway("ga").registry, 1, world.node("x").wpan_address)
    register_devid(world.gateway("gb").registry, 2, world.node("y").wpan_address)
    # x only knows its preconfigured gateway; y's devid is not registered there
    world.send_app(0.0, "x", 1, 2, b"hello")
    world.run()
    assert world.node("y").received_app == []
    drops = [r for r in world.trace if r.kind == "drop" and "unknown-devid" in r.detail]
    assert len(drops) == 1 and drops[0].node == "ga"


def test_cross_region_zigbee_passes():
    world = two_region_world(GatewayMode.ZIGBEE)
    world.prepare()
    ga, gb = world.gateway("ga"), world.gateway("gb")
    pseudo_y = gb.mapping.assign_pseudo(world.node("y").eui)
    dst_short = ga.mapping.assign_short(pseudo_y)
    apl = b"apl-through-wire"
    world.send_apl(0.0, "x", dst_short, apl)
    world.run()
    frames = world.node("y").received_nwk
    assert len(frames) == 1
    assert frames[0][1].payload == apl
    assert frames[0][1].dst_short == 0x0020


def test_cross_region_bridge_nwk_byte_identical():
    world = two_region_world(GatewayMode.BRIDGE)
    world.send_nwk(0.0, "x", 0x0020, b"continuous-nwk")
    world.run()
    frames = world.node("y").received_nwk
    assert len(frames) == 1
    expected = NwkFrame(dst_short=0x0020, src_short=0x0010, sequence=0,
                        payload=b"continuous-nwk")
    assert frames[0][1] == expected
    assert frames[0][1].encode() == expected.encode()


# --- devid mode through the simulator ----------------------------------------------------

def devid_world(seed=0):
    world = World(seed=seed, pan_id=0xAAAA)
    world.add_node("n1", NodeRole.RFD, 0x0010, stack="app")
    world.add_gateway("gw", 0x00FE, GatewayMode.DEVID, WIRED_A)
    world.add_host("h1", HOST_ADDR)
    world.add_link("n1", "gw")
    register_devid(world.gateway("gw").registry, 1, world.node("n1").wpan_address)
    register_devid(world.gateway("gw").registry, 9, HOST_ADDR)
    return world


def test_devid_uplink_through_sim():
    world = devid_world()
    world.send_app(0.0, "n1", 1, 9, b"reading")
    world.run()
    delivered = world.host("h1").delivered
    assert len(delivered) == 1
    pkt = delivered[0][1]
    assert pkt.src == WIRED_A  # not the node's address: IP terminates at the gateway
    assert decode_udp(pkt.payload).payload == AppHeader(1, 9).encode() + b"reading"


def test_devid_downlink_through_sim():
    world = devid_world()
    app_frame = AppHeader(9, 1).encode() + b"command"
    world.send_udp(0.0, "h1", "gw", 5, 5, app_frame)
    world.run()
    received = world.node("n1").received_app
    assert len(received) == 1
    assert received[0][1] == app_frame


def test_devid_downlink_over_budget_drops():
    world = devid_world()
    world.send_udp(0.0, "h1", "gw", 5, 5, AppHeader(9, 1).encode() + bytes(200))
    world.run()
    assert world.node("n1").received_app == []
    assert any("no-fragmentation" in r.detail for r in world.trace if r.kind == "drop")
