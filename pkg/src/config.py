from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", extra="ignore", env_file_encoding="utf-8"
    )

    # --- RFMP solver defaults ---
    RFMP_LAMBDA: float = 0.0
    RFMP_REPETITION_CAP: int = 1000
    RFMP_MAX_ITERATIONS: int = 10000
    RFMP_ALPHA_TOL: float = 1e-12
    RFMP_ENERGY_TOL: float = 1e-24
    RFMP_TIE_BREAK: str = "lowest-index"

    # --- Linear algebra ---
    RANK_TOLERANCE: float = 1e-12
    C1_FLOOR: float = 1e-14
    SPAN_POLICY: Literal["warn", "fail"] = "warn"

    # --- Verification tolerances ---
    VERIFY_NORMAL_EQ_TOL: float = 1e-6
    VERIFY_SOLUTION_TOL: float = 1e-5
    VERIFY_RANGE_TOL: float = 1e-6

    # --- Output / logging ---
    SAVE_DIR: str = "./results"
    LOG_LEVEL: str = "INFO"
    LOG_EVERY: int = 1000

settings = Settings()
