from __future__ import annotations

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Core config
    PHYLOALG_THREADS: int = Field(default=1, description="Upper bound on worker threads used for split scoring")
    LOG_LEVEL: str = Field(default="WARNING")

    # Tree enumeration grows as (2n-5)!!
    MAX_ENUMERATION_LEAVES: int = Field(default=8, ge=3, le=8)

    # Numerical tolerances
    DISTANCE_TIE_BAND: float = Field(default=1e-12, ge=0.0, description="Absolute band inside which two distances are tied")
    SPECTRAL_GAP_TOLERANCE: float = Field(
        default=1e-9,
        ge=0.0,
        description="Relative gap |s_k - s_k+1| / s_1 under which the nearest low-rank matrix is not unique",
    )

    # Human-readable output
    DISPLAY_DIGITS: int = Field(default=5, ge=1, le=17)

    def worker_count(self) -> int:
        return max(1, int(self.PHYLOALG_THREADS or 1))


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()  # type: ignore[call-arg]
