"""Command line front end: scenario runner, codec tool, budget table.

Exit codes: 0 ok, 1 usage, 2 scenario error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from ipaddress import IPv6Address
from pathlib import Path

from . import addressing, codec
from .frame import (
    PPDU_MAX,
    Eui64,
    FrameError,
    PhyBand,
    SecurityMode,
    Short16,
    decode_ppdu,
    encode_ppdu,
    frame_airtime,
    mac_payload_budget,
)
from .ipv6 import decode_ipv6, decode_udp, encode_ipv6
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCENARIO = 2
EXIT_RUNTIME = 3

DEFAULT_L2_SRC = "short:0xBEEF:0x0001"
DEFAULT_L2_DST = "short:0xBEEF:0x0002"

_NH_NAMES = {6: "tcp", 17: "udp", 58: "icmpv6"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lowpan")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario", help="scenario file path")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--seed", type=lambda v: int(v, 0), default=None)
    run.add_argument("--t-end", type=float, default=None)
    run.add_argument("--mode-override", default=None, help="force every gateway mode")

    cod = sub.add_parser("codec", help="encode/decode adaptation-layer streams")
    direction = cod.add_subparsers(dest="direction", required=True)
    dec = direction.add_parser("decode", help="decode a 6LoWPAN stream")
    dec.add_argument("hex")
    dec.add_argument("--l2-src", default=DEFAULT_L2_SRC)
    dec.add_argument("--l2-dst", default=DEFAULT_L2_DST)
    dec.add_argument("--pan", type=lambda v: int(v, 0), default=0xBEEF)
    com = direction.add_parser("compress", help="compress a raw IPv6 packet")
    com.add_argument("hex")
    com.add_argument("--l2-src", default=DEFAULT_L2_SRC)
    com.add_argument("--l2-dst", default=DEFAULT_L2_DST)
    ppe = direction.add_parser("ppdu-encode", help="wrap a PSDU in a PPDU")
    ppe.add_argument("hex")
    ppd = direction.add_parser("ppdu-decode", help="unwrap a PPDU")
    ppd.add_argument("hex")
    chk = direction.add_parser("check", help="verify a golden vector file")
    chk.add_argument("file")
    chk.add_argument("--pan", type=lambda v: int(v, 0), default=0xBEEF)

    sub.add_parser("budget", help="print payload budgets and airtimes")

    addr = sub.add_parser("addr", help="derive interface identifiers and addresses")
    group = addr.add_mutually_exclusive_group(required=True)
    group.add_argument("--eui", help="EUI-64 as 16 hex digits")
    group.add_argument("--short", type=lambda v: int(v, 0), help="16-bit short address")
    addr.add_argument("--pan", type=lambda v: int(v, 0), default=0xBEEF)
    addr.add_argument("--prefix", default=None, help="64-bit prefix for a global address")
    return parser


def _hex_bytes(text: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise SystemExit(_usage_error(f"not a hex string: {text!r}"))


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _l2_address(spec: str):
    parts = spec.split(":")
    if parts[0] == "short" and len(parts) == 3:
        return Short16(int(parts[1], 0), int(parts[2], 0))
    if parts[0] == "eui" and len(parts) == 2:
        raw = bytes.fromhex(parts[1])
        if len(raw) == 8:
            return Eui64(raw)
    raise SystemExit(_usage_error(f"bad link address spec: {spec!r}"))


def _dump_ipv6(pkt) -> list[str]:
    lines = [
        "version: 6",
        f"traffic-class: 0x{pkt.traffic_class:02X}",
        f"flow-label: 0x{pkt.flow_label:05X}",
        f"payload-length: {pkt.payload_length}",
        f"next-header: {pkt.next_header} ({_NH_NAMES.get(pkt.next_header, 'other')})",
        f"hop-limit: {pkt.hop_limit}",
        f"src: {pkt.src}",
        f"dst: {pkt.dst}",
    ]
    if pkt.next_header == 17:
        try:
            udp = decode_udp(pkt.payload)
            lines.append(
                f"udp: sport={udp.src_port} dport={udp.dst_port} "
                f"length={udp.length} checksum=0x{udp.checksum:04X}"
            )
        except ValueError:
            pass
    lines.append(f"ipv6-hex: {encode_ipv6(pkt).hex()}")
    return lines


def _dump_stream(data: bytes, l2_src, l2_dst, pan: int) -> list[str]:
    """Walk the header stack of one adaptation-layer payload."""
    lines = []
    orig, final = l2_src, l2_dst
    kind = codec.parse_dispatch(data[0])
    lines.append(f"dispatch: 0x{data[0]:02X} {kind.value}")
    if kind is codec.DispatchKind.MESH:
        mesh, consumed = codec.decode_mesh(data, pan)
        lines.append(
            f"mesh: orig={_fmt_addr(mesh.originator)} final={_fmt_addr(mesh.final)} "
            f"hops-left={mesh.hops_left}"
        )
        data = data[consumed:]
        orig, final = mesh.originator, mesh.final
        kind = codec.parse_dispatch(data[0])
        lines.append(f"dispatch: 0x{data[0]:02X} {kind.value}")
    if kind is codec.DispatchKind.BC0:
        seq, consumed = codec.decode_bc0(data)
        lines.append(f"bc0: seq={seq}")
        lines.append(f"payload-hex: {data[consumed:].hex()}")
        return lines
    if kind in (codec.DispatchKind.FRAG_FIRST, codec.DispatchKind.FRAG_SUBSEQUENT):
        header, consumed = codec.decode_frag(data)
        lines.append(
            f"frag: size={header.datagram_size} tag=0x{header.tag:04X} "
            f"offset={header.offset * 8}"
        )
        lines.append(f"fragment-hex: {data[consumed:].hex()}")
        return lines
    if kind is codec.DispatchKind.HC1:
        if len(data) < 3:
            raise codec.MalformedHeader("HC1 stream truncated", offset=len(data))
        enc = codec.Hc1Encoding.from_byte(data[1])
        nh_name = ("inline", "udp", "icmp", "tcp")[enc.next_header_mode]
        lines.append(
            f"hc1: src-mode={enc.src_mode} dst-mode={enc.dst_mode} "
            f"tcfl-zero={int(enc.tcfl_zero)} next-header={nh_name} hc2={int(enc.hc2_follows)}"
        )
        lines.append(f"hop-limit: {data[2]}")
    if kind in (codec.DispatchKind.HC1, codec.DispatchKind.UNCOMPRESSED_IPV6):
        pkt = codec.decompress_ipv6(data, orig, final)
        lines.extend(_dump_ipv6(pkt))
        return lines
    lines.append("payload-hex: " + data[1:].hex())
    return lines


def _fmt_addr(addr) -> str:
    if isinstance(addr, Short16):
        return f"short:0x{addr.pan_id:04X}:0x{addr.short:04X}"
    return f"eui:{addr.eui.hex()}"


def cmd_run(args) -> int:
    path = Path(args.scenario)
    if not path.exists():
        print(f"error: no such scenario: {path}", file=sys.stderr)
        return EXIT_SCENARIO
    try:
        world, t_end = load_scenario(
            path.read_text(),
            seed_override=args.seed,
            t_end_override=args.t_end,
            mode_override=args.mode_override,
        )
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    world.run_until(t_end)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.tsv"
    metrics_path = out / "metrics.txt"
    trace_path.write_text("".join(line + "\n" for line in world.trace_lines()))
    metrics_path.write_text("".join(line + "\n" for line in world.metrics_lines()))
    print(f"trace: {trace_path} ({len(world.trace)} records)")
    print(f"metrics: {metrics_path}")
    return EXIT_OK


def cmd_codec(args) -> int:
    if args.direction == "check":
        return _check_vectors(Path(args.file), args.pan)
    data = _hex_bytes(args.hex)
    try:
        if args.direction == "decode":
            if not data:
                return _usage_error("empty input")
            for line in _dump_stream(data, _l2_address(args.l2_src), _l2_address(args.l2_dst), args.pan):
                print(line)
        elif args.direction == "compress":
            pkt = decode_ipv6(data)
            stream = codec.compress_ipv6(pkt, _l2_address(args.l2_src), _l2_address(args.l2_dst))
            print(f"compressed-hex: {stream.hex()}")
            enc = codec.Hc1Encoding.from_byte(stream[1])
            print(
                f"hc1: src-mode={enc.src_mode} dst-mode={enc.dst_mode} "
                f"tcfl-zero={int(enc.tcfl_zero)} hc2={int(enc.hc2_follows)}"
            )
            print(f"octets: {len(stream)} (raw would be {1 + 40 + pkt.payload_length})")
        elif args.direction == "ppdu-encode":
            print(encode_ppdu(data).hex())
        elif args.direction == "ppdu-decode":
            ppdu = decode_ppdu(data)
            print(f"frame-length: {ppdu.frame_length}")
            print(f"psdu-hex: {ppdu.psdu.hex()}")
    except codec.CodecError as exc:
        where = f" at byte {exc.offset}" if exc.offset is not None else ""
        print(f"decode error{where}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FrameError, ValueError) as exc:
        print(f"decode error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _check_vectors(path: Path, pan: int) -> int:
    """Verify `<hex-input> <expected-kind> <hex-output>` golden records.

    Header records re-encode to the expected output; hc1/ipv6 records
    decompress to the expected raw IPv6 packet (default link context).
    """
    if not path.exists():
        print(f"error: no such file: {path}", file=sys.stderr)
        return EXIT_SCENARIO
    failures = 0
    checked = 0
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            print(f"{path}:{lineno}: expected three fields", file=sys.stderr)
            failures += 1
            continue
        data = bytes.fromhex(parts[0])
        expected_kind, expected_hex = parts[1], parts[2]
        checked += 1
        try:
            actual = _vector_result(data, pan)
        except ValueError as exc:
            print(f"{path}:{lineno}: {exc}", file=sys.stderr)
            failures += 1
            continue
        kind = codec.parse_dispatch(data[0]).value
        if kind != expected_kind or actual.hex() != expected_hex:
            print(
                f"{path}:{lineno}: got kind={kind} out={actual.hex()}",
                file=sys.stderr,
            )
            failures += 1
    if failures:
        print(f"{failures} of {checked} vectors failed", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{checked} vectors ok")
    return EXIT_OK


def _vector_result(data: bytes, pan: int) -> bytes:
    kind = codec.parse_dispatch(data[0])
    if kind is codec.DispatchKind.BC0:
        seq, consumed = codec.decode_bc0(data)
        return codec.encode_bc0(seq) + data[consumed:]
    if kind is codec.DispatchKind.MESH:
        mesh, consumed = codec.decode_mesh(data, pan)
        return codec.encode_mesh(mesh) + data[consumed:]
    if kind in (codec.DispatchKind.FRAG_FIRST, codec.DispatchKind.FRAG_SUBSEQUENT):
        header, consumed = codec.decode_frag(data)
        if header.first:
            return codec.encode_frag_first(header.datagram_size, header.tag) + data[consumed:]
        return (
            codec.encode_frag_subsequent(header.datagram_size, header.tag, header.offset)
            + data[consumed:]
        )
    if kind in (codec.DispatchKind.HC1, codec.DispatchKind.UNCOMPRESSED_IPV6):
        pkt = codec.decompress_ipv6(
            data, _l2_address(DEFAULT_L2_SRC), _l2_address(DEFAULT_L2_DST)
        )
        return encode_ipv6(pkt)
    raise ValueError(f"vector kind {kind.value} is not checkable")


def cmd_budget(_args) -> int:
    print("security      overhead  mac-payload-budget")
    for mode, label in (
        (SecurityMode.NONE, "none"),
        (SecurityMode.AES_CCM_32, "aes-ccm-32"),
        (SecurityMode.AES_CCM_64, "aes-ccm-64"),
        (SecurityMode.AES_CCM_128, "aes-ccm-128"),
    ):
        print(f"{label:<13} {mode.overhead:<9} {mac_payload_budget(mode)}")
    print()
    print("band   bit-rate-bps  ppdu-octets  airtime")
    for band, label in ((PhyBand.B2450, "2450"), (PhyBand.B915, "915"), (PhyBand.B868, "868")):
        airtime = frame_airtime(band, PPDU_MAX)
        print(f"{label:<6} {band.bit_rate:<13} {PPDU_MAX:<12} {airtime * 1000:.3f} ms")
    return EXIT_OK


def cmd_addr(args) -> int:
    if args.eui is not None:
        eui = bytes.fromhex(args.eui.replace(":", ""))
        if len(eui) != 8:
            return _usage_error("EUI-64 must be 8 octets")
        iid = addressing.iid_from_eui64(eui)
        print(f"eui: {eui.hex()}")
    else:
        p48 = addressing.pseudo48(args.pan, args.short)
        iid = addressing.iid_from_pseudo48(p48)
        print(f"pseudo48: {p48.hex()}")
    print(f"iid: {iid.hex()}")
    print(f"link-local: {addressing.link_local(iid)}")
    if args.prefix is not None:
        prefix = IPv6Address(args.prefix)
        print(f"global: {addressing.global_unicast(prefix, iid)}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "codec":
            return cmd_codec(args)
        if args.command == "budget":
            return cmd_budget(args)
        if args.command == "addr":
            return cmd_addr(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except Exception as exc:  # runtime failures map to a stable exit code
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
