"""
backend/services/_env_loader.py
Environment overrides for the run configuration.

Priority: os.environ -> .env file at the workspace root.
The .env file never overwrites variables already exported in the shell.
"""

import os

from dotenv import dotenv_values

ENV_OUTPUT_DIR  = "DBR_OUTPUT_DIR"
ENV_LOG_LEVEL   = "DBR_LOG_LEVEL"
ENV_MASTER_SEED = "DBR_MASTER_SEED"

_DOTENV_PATH = os.path.normpath(
    os.path.join(os.path.dirname(__file__), "..", "..", ".env")
)


def load_var(name: str, dotenv_path: str | None = None) -> str:
    """
    Look up one override by name.

    Search order:
      1. os.environ  (shell-exported, CI)
      2. .env file at the workspace root  (local development)

    Returns empty string if not found.
    """
    val = os.environ.get(name, "").strip()
    if val:
        return val

    path = dotenv_path or _DOTENV_PATH
    if os.path.isfile(path):
        return (dotenv_values(path).get(name) or "").strip()
    return ""


def load_overrides(dotenv_path: str | None = None) -> dict[str, str]:
    """All recognised DBR_* overrides that are set, keyed by variable name."""
    found = {}
    for name in (ENV_OUTPUT_DIR, ENV_LOG_LEVEL, ENV_MASTER_SEED):
        val = load_var(name, dotenv_path)
        if val:
            found[name] = val
    return found
