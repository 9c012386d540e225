"""Malicious security by attested execution of the semi-honest protocol."""

from .attest import (
    AttestError,
    AttestFunctionality,
    AttestHalt,
    AttestState,
    AttestToken,
    RootAuthority,
    TokenError,
    code_hash,
    read_token,
    write_token,
)
from .channel import ENVELOPE_OVERHEAD, AttestedEndpoint, ProtocolAbort
from .malicious import MaliciousSession, compare_runs, run_malicious, run_semi_honest
from .tamper import STRATEGIES, CampaignReport, TamperCampaign, tiny_model

__all__ = [
    "AttestError",
    "AttestFunctionality",
    "AttestHalt",
    "AttestState",
    "AttestToken",
    "AttestedEndpoint",
    "CampaignReport",
    "ENVELOPE_OVERHEAD",
    "MaliciousSession",
    "ProtocolAbort",
    "RootAuthority",
    "STRATEGIES",
    "TamperCampaign",
    "TokenError",
    "code_hash",
    "compare_runs",
    "read_token",
    "run_malicious",
    "run_semi_honest",
    "tiny_model",
    "write_token",
]
