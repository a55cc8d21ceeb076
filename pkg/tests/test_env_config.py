import pytest

from env_config import EnvironmentConfig

NAMES = list(EnvironmentConfig.DEFAULTS)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    # setenv first so teardown also removes values a .env file put there
    for name in NAMES:
        monkeypatch.setenv(name, "unset")
        monkeypatch.delenv(name)


def test_defaults(tmp_path):
    config = EnvironmentConfig.load(str(tmp_path / "absent.env"))
    assert config == {
        'log_dir': 'logs', 'log_level': 'INFO', 'workers': 1,
        'ip_time_limit': 10.0, 'threshold': 0.15,
    }


def test_dotenv_file_is_read(tmp_path):
    env = tmp_path / ".env"
    env.write_text("DUTY_SIEVE_WORKERS=4\nDUTY_SIEVE_LOG_LEVEL=debug\n")
    config = EnvironmentConfig.load(str(env))
    assert config['workers'] == 4
    assert config['log_level'] == 'DEBUG'


def test_every_bad_value_is_reported(tmp_path, monkeypatch):
    monkeypatch.setenv("DUTY_SIEVE_WORKERS", "zero")
    monkeypatch.setenv("DUTY_SIEVE_THRESHOLD", "1.5")
    monkeypatch.setenv("DUTY_SIEVE_LOG_LEVEL", "LOUD")
    with pytest.raises(ValueError) as exc:
        EnvironmentConfig.load(str(tmp_path / "absent.env"))
    message = str(exc.value)
    assert "DUTY_SIEVE_WORKERS" in message
    assert "DUTY_SIEVE_THRESHOLD" in message
    assert "DUTY_SIEVE_LOG_LEVEL" in message
