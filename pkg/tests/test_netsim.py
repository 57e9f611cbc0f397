from ipaddress import IPv6Address

import pytest

from lowpan.frame import PhyBand, SecurityMode
from lowpan.gateway import GatewayMode
from lowpan.ipv6 import decode_udp
from lowpan.netsim import NodeRole, SleepSchedule, World


def make_line(seed=0, hops=None):
    """4-node line: a (coordinator) - b - c - d (RFD)."""
    world = World(seed=seed)
    world.add_node("a", NodeRole.COORDINATOR, 0x0001)
    world.add_node("b", NodeRole.FFD, 0x0002)
    world.add_node("c", NodeRole.FFD, 0x0003)
    world.add_node("d", NodeRole.RFD, 0x0004)
    world.add_link("a", "b")
    world.add_link("b", "c")
    world.add_link("c", "d")
    return world


def forwards_of(world, node_id):
    return [r for r in world.trace if r.node == node_id and r.kind == "forward"]


def drops_of(world, reason=None):
    records = [r for r in world.trace if r.kind == "drop"]
    if reason is None:
        return records
    return [r for r in records if f"reason={reason}" in r.detail]


# --- mesh forwarding ---------------------------------------------------------

def test_line_delivery_with_hops_4():
    world = make_line()
    world.send_udp(0.0, "a", "d", 0xF0B3, 0xF0B4, b"hello", hops=4)
    world.run()
    packets = world.node("d").received_packets
    assert len(packets) == 1
    assert decode_udp(packets[0][1].payload).payload == b"hello"
    # each forwarder decrements exactly once
    assert [r.detail for r in forwards_of(world, "b")] == ["final=0x0004 hops=3"]
    assert [r.detail for r in forwards_of(world, "c")] == ["final=0x0004 hops=2"]
    assert not forwards_of(world, "a") and not forwards_of(world, "d")


def test_line_drop_with_hops_2():
    world = make_line()
    world.send_udp(0.0, "a", "d", 0xF0B3, 0xF0B4, b"hello", hops=2)
    world.run()
    assert world.node("d").received_packets == []
    # the first forwarder still forwards, the second exhausts the budget
    assert len(forwards_of(world, "b")) == 1
    assert forwards_of(world, "c") == []
    exhausted = drops_of(world, "hops-exhausted")
    assert len(exhausted) == 1 and exhausted[0].node == "c"


def test_delivery_to_self_address_forms():
    world = make_line()
    world.send_udp(0.0, "a", "b", 0xF0B3, 0xF0B4, b"direct", hops=4)
    world.run()
    assert len(world.node("b").received_packets) == 1


def test_rfd_never_forwards():
    world = World(seed=0)
    world.add_node("a", NodeRole.COORDINATOR, 0x0001)
    world.add_node("r", NodeRole.RFD, 0x0002)
    world.add_node("b", NodeRole.FFD, 0x0003)
    world.add_link("a", "r")
    world.add_link("r", "b")
    # no route via BFS (RFDs are not transit); force one to prove the node refuses
    world.node("a").routes[0x0003] = 0x0002
    world.send_udp(0.0, "a", "b", 1, 2, b"x")
    world.run()
    assert world.node("b").received_packets == []
    refused = drops_of(world, "not-forwarder")
    assert len(refused) == 1 and refused[0].node == "r"
    assert forwards_of(world, "r") == []


def test_bfs_routes_avoid_rfd_transit():
    world = World(seed=0)
    world.add_node("a", NodeRole.COORDINATOR, 0x0001)
    world.add_node("r", NodeRole.RFD, 0x0002)
    world.add_node("f", NodeRole.FFD, 0x0003)
    world.add_node("b", NodeRole.FFD, 0x0004)
    world.add_link("a", "r")  # short path, but through an RFD
    world.add_link("r", "b")
    world.add_link("a", "f")
    world.add_link("f", "b")
    world.prepare()
    assert world.node("a").routes[0x0004] == 0x0003  # via the FFD


# --- broadcast ----------------------------------------------------------------

def make_mesh_10(seed=0):
    world = World(seed=seed)
    world.add_node("n0", NodeRole.COORDINATOR, 0x0000)
    for i in range(1, 10):
        world.add_node(f"n{i}", NodeRole.FFD, i)
    for i in range(10):
        world.add_link(f"n{i}", f"n{(i + 1) % 10}")
    world.add_link("n0", "n5")
    world.add_link("n2", "n7")
    return world


def test_flood_delivers_once_per_node_and_terminates():
    world = make_mesh_10()
    world.broadcast(0.0, "n0", b"flood", hops=15)
    world.run()  # run() draining the queue is the termination proof
    for i in range(10):
        copies = world.node(f"n{i}").received_broadcasts
        assert len(copies) == 1, f"n{i} got {len(copies)} copies"
        assert copies[0][1] == b"flood"
    assert len(drops_of(world, "duplicate")) > 0


def test_duplicate_arrival_dropped():
    world = World(seed=0)
    world.add_node("a", NodeRole.COORDINATOR, 1)
    world.add_node("b", NodeRole.FFD, 2)
    world.add_node("c", NodeRole.FFD, 3)
    world.add_link("a", "b")
    world.add_link("a", "c")
    world.add_link("b", "c")  # triangle: b and c re-flood to each other
    world.broadcast(0.0, "a", b"x")
    world.run()
    assert len(drops_of(world, "duplicate")) >= 2


def test_sequence_wrap_still_dedups():
    world = make_mesh_10()
    world.node("n0").bc0_seq = 255
    world.broadcast(0.0, "n0", b"first")
    world.broadcast(1.0, "n0", b"second")  # wraps to sequence 0
    world.run()
    for i in range(10):
        payloads = [p for _, p in world.node(f"n{i}").received_broadcasts]
        assert payloads == [b"first", b"second"]


def test_rfd_delivers_but_does_not_reflood():
    world = World(seed=0)
    world.add_node("a", NodeRole.COORDINATOR, 1)
    world.add_node("r", NodeRole.RFD, 2)
    world.add_node("b", NodeRole.FFD, 3)
    world.add_link("a", "r")
    world.add_link("r", "b")
    world.broadcast(0.0, "a", b"x", hops=8)
    world.run()
    assert len(world.node("r").received_broadcasts) == 1
    assert world.node("b").received_broadcasts == []  # r refuses to re-flood
    assert forwards_of(world, "r") == []


# --- sleep, loss, timing --------------------------------------------------------

def test_sleep_gating():
    world = World(seed=0)
    world.add_node("a", NodeRole.COORDINATOR, 1)
    world.add_node("s", NodeRole.RFD, 2, sleep=SleepSchedule(awake=1.0, asleep=1.0))
    world.add_link("a", "s")
    world.send_udp(0.2, "a", "s", 1, 2, b"awake")
    world.send_udp(1.2, "a", "s", 1, 2, b"asleep")
    world.run()
    assert len(world.node("s").received_packets) == 1
    asleep = drops_of(world, "asleep")
    assert len(asleep) == 1 and asleep[0].node == "s"
    # the invariant: no tx/rx trace row shows a sleeping node
    for record in world.trace:
        if record.kind in ("tx", "rx"):
            assert world.nodes[record.node].is_awake(record.time)


def test_sleeping_sender_drops():
    world = World(seed=0)
    world.add_node("s", NodeRole.FFD, 1, sleep=SleepSchedule(awake=1.0, asleep=9.0))
    world.add_node("b", NodeRole.FFD, 2)
    world.add_link("s", "b")
    world.send_udp(1.5, "s", "b", 1, 2, b"x")
    world.run()
    drops = drops_of(world, "asleep")
    assert len(drops) == 1 and drops[0].node == "s" and "dir=tx" in drops[0].detail


def test_total_loss_drops_everything():
    world = World(seed=1)
    world.add_node("a", NodeRole.COORDINATOR, 1)
    world.add_node("b", NodeRole.FFD, 2)
    world.add_link("a", "b", loss=1.0)
    world.send_udp(0.0, "a", "b", 1, 2, b"x")
    world.run()
    assert world.node("b").received_packets == []
    assert len(drops_of(world, "loss")) == 1


def test_seeded_loss_is_reproducible():
    def run(seed):
        world = World(seed=seed)
        world.add_node("a", NodeRole.COORDINATOR, 1)
        world.add_node("b", NodeRole.FFD, 2)
        world.add_link("a", "b", loss=0.5)
        for i in range(20):
            world.send_udp(0.1 * i, "a", "b", 1, 2, bytes([i]))
        world.run()
        return world.trace_lines()

    assert run(42) == run(42)
    assert run(42) != run(43)  # 2^-20 chance of a false failure


def test_airtime_matches_trace():
    world = World(seed=0)
    world.add_node("a", NodeRole.COORDINATOR, 1)
    world.add_node("b", NodeRole.FFD, 2)
    world.add_link("a", "b", band=PhyBand.B2450)
    world.send_udp(0.0, "a", "b", 1, 2, b"x")
    world.run()
    tx = next(r for r in world.trace if r.kind == "tx")
    rx = next(r for r in world.trace if r.kind == "rx")
    assert rx.nbytes == tx.nbytes
    assert rx.time - tx.time == pytest.approx(tx.nbytes * 8 / 250_000, abs=1e-12)


def test_transmissions_serialize_on_the_radio():
    world = World(seed=0)
    world.add_node("a", NodeRole.COORDINATOR, 1)
    world.add_node("b", NodeRole.FFD, 2)
    world.add_link("a", "b")
    world.send_udp(0.0, "a", "b", 1, 2, bytes(600))  # fragmented burst
    world.run()
    tx_times = [r.time for r in world.trace if r.kind == "tx"]
    assert len(tx_times) > 1
    assert all(b > a for a, b in zip(tx_times, tx_times[1:]))


# --- fragmentation through the stack ------------------------------------------

def test_fragmented_unicast_reassembles():
    world = make_line()
    payload = bytes((i * 11 + 3) & 0xFF for i in range(900))
    world.send_udp(0.0, "a", "d", 0xF0B3, 0xF0B4, payload, hops=8)
    world.run()
    packets = world.node("d").received_packets
    assert len(packets) == 1
    assert decode_udp(packets[0][1].payload).payload == payload
    assert any(r.kind == "frag-start" for r in world.trace)
    assert any(r.kind == "reasm-complete" and r.node == "d" for r in world.trace)


def test_security_overhead_shrinks_budget():
    world = World(seed=0)
    world.add_node("a", NodeRole.COORDINATOR, 1, security=SecurityMode.AES_CCM_128)
    world.add_node("b", NodeRole.FFD, 2, security=SecurityMode.AES_CCM_128)
    world.add_link("a", "b")
    world.send_udp(0.0, "a", "b", 1, 2, bytes(200))
    world.run()
    assert len(world.node("b").received_packets) == 1
    frames = [r for r in world.trace if r.kind == "tx"]
    assert all(r.nbytes <= 133 for r in frames)


# --- determinism -----------------------------------------------------------------

def build_busy_world(seed):
    world = World(seed=seed)
    world.add_node("c", NodeRole.COORDINATOR, 0x0001)
    world.add_node("f", NodeRole.FFD, 0x0002)
    world.add_node("r", NodeRole.RFD, 0x0003, sleep=SleepSchedule(0.5, 0.5))
    world.add_gateway("gw", 0x00FE, GatewayMode.BORDER, IPv6Address("fd00::a"),
                      prefix=IPv6Address("2001:db8:a::"))
    world.add_host("h", IPv6Address("fd00::99"))
    world.add_link("c", "f", loss=0.2)
    world.add_link("f", "gw")
    world.add_link("r", "c")
    for i in range(5):
        world.send_udp(0.3 * i, "c", "h", 0xF0B3, 0xF0B4, bytes([i] * 40))
    world.send_udp(2.0, "h", "c", 0xF0B3, 0xF0B4, bytes(700))
    world.broadcast(3.0, "c", b"hello")
    return world


def test_trace_is_pure_function_of_seed():
    first = build_busy_world(7)
    first.run()
    second = build_busy_world(7)
    second.run()
    assert first.trace_lines() == second.trace_lines()
    assert first.metrics_lines() == second.metrics_lines()


def test_metrics_lines_shape():
    world = make_line()
    world.send_udp(0.0, "a", "d", 1, 2, b"x", hops=8)
    world.run()
    metrics = dict(line.split("=") for line in world.metrics_lines())
    assert metrics["sent"] == "1"
    assert metrics["delivered"] == "1"
    assert metrics["delivery_ratio"] == "1"
    assert "mean_header_overhead" in metrics
