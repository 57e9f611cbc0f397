"""Where the octets go: PHY framing, MAC overhead and what is left for data.

A frame on the air is at most 133 octets.  Six of them are PHY
(preamble, start delimiter, length), so the PSDU tops out at 127.  A
fully addressed data frame spends another 25 on MAC header and FCS,
and link-layer security takes its cut before the payload sees a byte.
"""

from lowpan.frame import (
    PPDU_MAX,
    PSDU_MAX,
    PhyBand,
    SecurityMode,
    encode_ppdu,
    frame_airtime,
    mac_payload_budget,
)

print("PPDU anatomy")
ppdu = encode_ppdu(b"\x01\x02\x03")
print(f"  3-octet PSDU encodes to {len(ppdu)} octets on air: {ppdu.hex()}")
print(f"  (4-octet zero preamble, SFD 0xE6, length octet, PSDU)")
print(f"  largest frame: {PSDU_MAX}-octet PSDU -> {PPDU_MAX} octets on air")
print()

print("MAC payload budget per security suite")
for mode in SecurityMode:
    print(
        f"  {mode.name.lower():<12} overhead {mode.overhead:>2}  ->  "
        f"{mac_payload_budget(mode):>3} octets for the adaptation layer"
    )
print()

print("Subtract the network stack (40-octet IPv6 header, 8-octet UDP header)")
budget = mac_payload_budget(SecurityMode.AES_CCM_128)
print(f"  AES-CCM-128: {budget} - 40 - 8 = {budget - 48} octets of application data")
print("  which is why header compression exists (see 02_header_compression.py)")
print()

print("Airtime of a full frame per band")
for band in (PhyBand.B2450, PhyBand.B915, PhyBand.B868):
    ms = frame_airtime(band, PPDU_MAX) * 1000
    print(f"  {band.name:<6} {band.bit_rate:>7} bit/s  ->  {ms:7.3f} ms")
