"""Noncommutative symmetric operator products and their AGM inequalities."""
from .errors import (
    InvalidArgumentError,
    NcagmError,
    NumericFailureError,
    OrderViolationError,
    PreconditionError,
    ResourceLimitError,
    SamplerError,
)
from .hermitian import OperatorFamily, as_hermitian, eig_hermitian, loewner_leq, op_norm
from .partitions import MobiusCache, SetPartition, bell_number, enumerate_partitions, mobius
from .products import (
    average_product,
    full_sum_direct,
    full_sum_embedded,
    p_d_bruteforce,
    p_d_via_mobius,
    restricted_sum,
)

__version__ = "0.1.0"

__all__ = [
    "InvalidArgumentError",
    "MobiusCache",
    "NcagmError",
    "NumericFailureError",
    "OperatorFamily",
    "OrderViolationError",
    "PreconditionError",
    "ResourceLimitError",
    "SamplerError",
    "SetPartition",
    "as_hermitian",
    "average_product",
    "bell_number",
    "eig_hermitian",
    "enumerate_partitions",
    "full_sum_direct",
    "full_sum_embedded",
    "loewner_leq",
    "mobius",
    "op_norm",
    "p_d_bruteforce",
    "p_d_via_mobius",
    "restricted_sum",
]
