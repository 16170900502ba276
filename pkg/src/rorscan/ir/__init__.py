"""Contract IR: the executable stand-in for contract source plus its static facts."""

from .expr import parse_expr, render
from .meta import (
    AbiSpec,
    CallSite,
    FunctionMeta,
    abi_of,
    function_meta,
    is_access_controlled,
    is_safe_callee,
)
from .model import ContractIR, FunctionDef, FunctionRef, parse_contract

__all__ = [
    "AbiSpec",
    "CallSite",
    "ContractIR",
    "FunctionDef",
    "FunctionMeta",
    "FunctionRef",
    "abi_of",
    "function_meta",
    "is_access_controlled",
    "is_safe_callee",
    "parse_contract",
    "parse_expr",
    "render",
]
