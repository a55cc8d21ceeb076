from typing import Any, Dict
import os
from dotenv import load_dotenv
import logging


class EnvironmentConfig:
    """Runtime defaults read from the environment (and an optional .env file)."""

    DEFAULTS = {
        'DUTY_SIEVE_LOG_DIR': 'logs',
        'DUTY_SIEVE_LOG_LEVEL': 'INFO',
        'DUTY_SIEVE_WORKERS': '1',
        'DUTY_SIEVE_IP_TIME_LIMIT': '10',
        'DUTY_SIEVE_THRESHOLD': '0.15',
    }

    LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']

    @staticmethod
    def load(dotenv_path: str = None) -> Dict[str, Any]:
        """Load and validate environment configuration.

        Raises:
            ValueError: listing every variable with a malformed value
        """
        logger = logging.getLogger(__name__)
        load_dotenv(dotenv_path)

        def get(name: str) -> str:
            return os.getenv(name, EnvironmentConfig.DEFAULTS[name]).strip()

        problems = []

        def number(name: str, kind: type, check, rule: str):
            raw = get(name)
            try:
                value = kind(raw)
            except ValueError:
                problems.append(f"{name}={raw!r} is not a valid {kind.__name__}")
                return None
            if not check(value):
                problems.append(f"{name}={raw!r} must be {rule}")
            return value

        workers = number('DUTY_SIEVE_WORKERS', int, lambda v: v >= 1, "at least 1")
        ip_time_limit = number('DUTY_SIEVE_IP_TIME_LIMIT', float, lambda v: v > 0, "positive")
        threshold = number('DUTY_SIEVE_THRESHOLD', float, lambda v: 0 < v < 1, "strictly between 0 and 1")
        log_level = get('DUTY_SIEVE_LOG_LEVEL').upper()
        if log_level not in EnvironmentConfig.LOG_LEVELS:
            problems.append(f"DUTY_SIEVE_LOG_LEVEL={log_level!r} must be one of {', '.join(EnvironmentConfig.LOG_LEVELS)}")

        if problems:
            raise ValueError("Invalid environment configuration: " + "; ".join(problems))

        config = {
            'log_dir': get('DUTY_SIEVE_LOG_DIR'),
            'log_level': log_level,
            'workers': workers,
            'ip_time_limit': ip_time_limit,
            'threshold': threshold,
        }
        logger.debug(f"Environment configuration: {config}")
        return config
