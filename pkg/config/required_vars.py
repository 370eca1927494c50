# Mandatory environment variables for the selected profile (dev, test).
# load_config.py validates that they are present after the .env file is loaded.
REQUIRED_VARS = [
    # Which profile is active; 'test' switches the report store to in-memory SQLite.
    "ENV_PROFILE",

    "LOG_LEVEL",

    # Inference boundary: 'replay' (JSONL scripts) or 'process' (external runtime).
    "BACKEND",
]

# Keys a run-configuration file must define. Everything else has a default
# mirroring FusionConfig / EvalConfig.
REQUIRED_RUN_KEYS = [
    "MODE",
    "INPUT",
]
