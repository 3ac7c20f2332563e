"""Key distillation: reconciliation, verification, authentication, privacy amplification."""

from .auth import AuthenticationError, AuthKeyPool, AuthTag, KeyReuseError, lfsr_toeplitz_auth
from .crc64 import crc64_bits, crc64_verify
from .distill import LEDGER_COLUMNS, DistillLedger, DistillResult, distill, shared_pools
from .toeplitz import PASpec, compute_pa_factor, toeplitz_pa
from .transcript import Transcript
from .winnow import CorrectedBlock, WinnowResult, winnow_correct, winnow_replay

__all__ = [
    "AuthenticationError", "AuthKeyPool", "AuthTag", "KeyReuseError", "lfsr_toeplitz_auth",
    "crc64_bits", "crc64_verify",
    "LEDGER_COLUMNS", "DistillLedger", "DistillResult", "distill", "shared_pools",
    "PASpec", "compute_pa_factor", "toeplitz_pa",
    "Transcript",
    "CorrectedBlock", "WinnowResult", "winnow_correct", "winnow_replay",
]
