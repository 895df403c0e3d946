"""Separate source/channel coding baseline."""

from .codec import (Bitstream, CodecError, Failure, b_max, dct_codec_decode, dct_codec_encode,
                    rate_control, source_budget)
from .fec import conv_encode, crc16, crc_check, depuncture, puncture, viterbi_decode
from .link import UserRecord, bler_point, sscc_link_run, transmit_blocks
from .modem import qam_demap_llr, qam_map
from .receiver import lmmse_equalize, ls_estimate

__all__ = [
    "Bitstream", "CodecError", "Failure", "UserRecord", "b_max", "bler_point", "conv_encode",
    "crc16", "crc_check", "dct_codec_decode", "dct_codec_encode", "depuncture", "lmmse_equalize",
    "ls_estimate", "puncture", "qam_demap_llr", "qam_map", "rate_control", "sscc_link_run",
    "source_budget", "transmit_blocks", "viterbi_decode",
]
