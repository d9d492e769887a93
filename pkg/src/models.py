from __future__ import annotations

import math
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def parse_rational(text: Union[str, int, Fraction]) -> Fraction:
    """Exact value of ``p/q``, an integer or a decimal literal."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a rational number: {text!r}") from None


def format_sci(value: float, digits: int = 5) -> str:
    """Render as ``0.ddddde-k`` with a mantissa in [0.1, 1)."""
    x = float(value)
    if x == 0.0:
        return "0"
    if not math.isfinite(x):
        return str(x)
    sign = "-" if x < 0 else ""
    x = abs(x)
    exp = math.floor(math.log10(x)) + 1
    mantissa = round(x / 10.0**exp, digits)
    if mantissa >= 1.0:
        mantissa /= 10.0
        exp += 1
    elif mantissa < 0.1:
        mantissa *= 10.0
        exp -= 1
    return f"{sign}{mantissa:.{digits}f}e{exp}"


class Error(BaseModel):
    code: str
    message: str
    details: Optional[Dict[str, object]] = None


# Reports
class DatasetSummary(BaseModel):
    digest: str
    n_languages: Optional[int] = None
    n_variables: Optional[int] = None


class SplitScore(BaseModel):
    split: str
    rows: int
    cols: int
    linf: Optional[str] = None
    l1: Optional[str] = None
    minor_count: int = 0
    dist_sq: Optional[float] = None
    singular_values: List[float] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)


class CandidateReport(BaseModel):
    id: str
    newick: Optional[str] = None
    linf: Optional[str] = Field(default=None, description="Exact max |minor| as p/q")
    l1: Optional[str] = Field(default=None, description="Exact sum of |minor| as p/q")
    dist_sq_lb: Optional[float] = Field(default=None, description="Largest squared distance to the rank-2 variety")
    splits: List[str] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)
    per_split: List[SplitScore] = Field(default_factory=list)


class Winner(BaseModel):
    criterion: str
    id: str
    newick: Optional[str] = None
    value: Union[str, float]
    tied: List[str] = Field(default_factory=list, description="Other minimal candidates with a different unrooted topology")
    equivalent: List[str] = Field(default_factory=list, description="Other minimal candidates that are root shifts of the winner")


class RankingReport(BaseModel):
    dataset: DatasetSummary
    criteria: List[str]
    conditional: bool
    candidates: List[CandidateReport]
    winners: Dict[str, Winner]
    agreement: str


# Input files
class SamplingRecord(BaseModel):
    rng: str = Field(description="Bit generator that drew the sample")
    seed: Optional[int] = None


class DistributionFile(BaseModel):
    leaves: List[str] = Field(min_length=1)
    kind: Literal["counts", "distribution"] = "distribution"
    entries: Dict[str, Union[int, str]]
    sampling: Optional[SamplingRecord] = None

    @field_validator("leaves")
    @classmethod
    def _unique_leaves(cls, v: List[str]) -> List[str]:
        if len(set(v)) != len(v):
            raise ValueError("leaf names must be unique")
        return v

    @model_validator(mode="after")
    def _check_entries(self) -> "DistributionFile":
        n = len(self.leaves)
        for pattern, value in self.entries.items():
            if len(pattern) != n or set(pattern) - {"0", "1"}:
                raise ValueError(f"pattern {pattern!r} is not a {n}-bit 0/1 string")
            if self.kind == "counts":
                if not isinstance(value, int) or value < 0:
                    raise ValueError(f"count for {pattern} must be a nonnegative integer")
            elif parse_rational(value) < 0:
                raise ValueError(f"probability for {pattern} is negative")
        if self.sampling is not None and self.kind != "counts":
            raise ValueError("only counts files carry a sampling record")
        return self


class ModelFile(BaseModel):
    newick: str
    pi: str = Field(description="Root probability of state 0, as p/q")
    edges: Dict[str, str] = Field(description="Flip probability per edge, keyed by the comma-joined leaves below it")
    leaves: Optional[List[str]] = None

    @field_validator("pi")
    @classmethod
    def _pi_is_rational(cls, v: str) -> str:
        parse_rational(v)
        return v
