try:
    from pydantic_settings import BaseSettings, SettingsConfigDict
except ImportError:
    from pydantic import BaseSettings

    SettingsConfigDict = dict


class Settings(BaseSettings):
    # Logging Configuration
    log_level: str = "INFO"

    # Reproducibility
    default_seed: int = 20140527  # BIODOSE_DEFAULT_SEED

    # Fitting Configuration
    fit_tol: float = 1e-8  # relative parameter change
    fit_max_iter: int = 1000
    mixture_phi: float = 0.05
    small_residual_t: float = 1e-2  # series branch for g, xi, P below this R^2/(2 sigma0^2)

    # Model Selection Configuration
    selection_k: float = 2.0
    selection_max_outside: int = 3

    # Dose Grid Configuration
    grid_points: int = 2000
    grid_margin: float = 3.0  # grid reaches the dose where Y = margin * y_f
    theta_epsilon: float = 1e-6
    quad_epsrel: float = 1e-8

    # Monte Carlo Integration Configuration
    mc_samples: int = 100_000
    mc_batch_size: int = 2000
    min_mc_samples: int = 10_000
    simplex_tolerance: float = 0.01
    simplex_warn_rejection: float = 0.99

    # Cell Irradiation Simulator Configuration
    sim_const: float = 0.012  # Gy per damage
    sim_chunk: int = 4096
    sim_damage_ceiling: int = 100_000_000
    sim_workers: int = 1

    # Output Configuration
    output_float_format: str = "%.17g"

    model_config = SettingsConfigDict(env_prefix="BIODOSE_", env_file=".env", extra="ignore")


settings = Settings()
