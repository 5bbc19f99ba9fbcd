import copy
import hashlib
import json
import os

from gauss_errors import ConfigError


def get_settings_path(base_dir):
    return os.path.join(base_dir, "settings.json")


def get_default_run_settings():
    """Get default run settings structure."""
    return {
        "seed": 0,
        "weightSettings": {
            "kind": "constant",
            "constant": 1.0,
            "seed_exponent": 0,
            "truncation_depth": 12.0,
            "path": ""
        },
        "meshSettings": {
            "refinement_level": 4,
            "quadrature_order": 7
        },
        "continuationSettings": {
            "natural_step": 0.01,
            "arclength_step": 0.02,
            "max_arclength_step": 0.5,
            "switch_mu1": 0.2,
            "t_min": 1e-3,
            "max_steps": 2000,
            "max_halvings": 8,
            "fold_tolerance": 1e-10
        },
        "newtonSettings": {
            "newton_tol": 1e-10,
            "max_iter": 50
        },
        "mountainPassSettings": {
            "theta": 3.0,
            "path_nodes": 21,
            "tol": 1e-3,
            "max_iterations": 500,
            "max_retries": 3,
            "t_list": [0.4]
        },
        "certifySettings": {
            "t": 0.6,
            "attempts": 20
        },
        "outputSettings": {
            "output_dir": "gauss_output",
            "debug_mode": False
        }
    }


# (section, key) -> (type, low, high); None bounds are open.
SETTING_RANGES = {
    ("weightSettings", "constant"): (float, 0.0, None),
    ("weightSettings", "seed_exponent"): (int, 0, 16),
    ("weightSettings", "truncation_depth"): (float, 0.0, 20.0),
    ("meshSettings", "refinement_level"): (int, 0, 8),
    ("meshSettings", "quadrature_order"): (int, 1, 7),
    ("continuationSettings", "natural_step"): (float, 1e-8, 0.5),
    ("continuationSettings", "arclength_step"): (float, 1e-8, 1.0),
    ("continuationSettings", "max_arclength_step"): (float, 1e-8, 10.0),
    ("continuationSettings", "switch_mu1"): (float, 0.0, 2.0),
    ("continuationSettings", "t_min"): (float, 0.0, 1.0),
    ("continuationSettings", "max_steps"): (int, 1, None),
    ("continuationSettings", "max_halvings"): (int, 0, 60),
    ("continuationSettings", "fold_tolerance"): (float, 0.0, 1e-3),
    ("newtonSettings", "newton_tol"): (float, 1e-15, 1e-2),
    ("newtonSettings", "max_iter"): (int, 1, 1000),
    ("mountainPassSettings", "theta"): (float, 2.0, None),
    ("mountainPassSettings", "path_nodes"): (int, 3, 1000),
    ("mountainPassSettings", "tol"): (float, 0.0, 1.0),
    ("mountainPassSettings", "max_iterations"): (int, 1, None),
    ("mountainPassSettings", "max_retries"): (int, 0, 10),
    ("certifySettings", "t"): (float, 0.0, None),
    ("certifySettings", "attempts"): (int, 1, 10000),
}

WEIGHT_KINDS = ("constant", "poincare", "file")


def merge_run_settings(base, overrides):
    """Merge overrides over base section by section; unknown keys are refused."""
    merged = copy.deepcopy(base)

    for section, values in overrides.items():
        if section not in merged:
            raise ConfigError(f"Unknown settings section '{section}'")

        if not isinstance(merged[section], dict):
            merged[section] = values
            continue

        if not isinstance(values, dict):
            raise ConfigError(f"Settings section '{section}' must be an object")

        for key, value in values.items():
            if key not in merged[section]:
                raise ConfigError(f"Unknown setting '{section}.{key}'")

            merged[section][key] = value

    return merged


def validate_run_settings(settings):
    for (section, key), (kind, low, high) in SETTING_RANGES.items():
        value = settings[section][key]

        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"Setting '{section}.{key}' must be numeric")

        if kind is int and int(value) != value:
            raise ConfigError(f"Setting '{section}.{key}' must be an integer")

        if low is not None and value < low:
            raise ConfigError(f"Setting '{section}.{key}'={value} below {low}")

        if high is not None and value > high:
            raise ConfigError(f"Setting '{section}.{key}'={value} above {high}")

    if settings["mountainPassSettings"]["theta"] <= 2.0:
        raise ConfigError("Setting 'mountainPassSettings.theta' must exceed 2")

    weight = settings["weightSettings"]

    if weight["kind"] not in WEIGHT_KINDS:
        raise ConfigError(f"Unknown weight kind '{weight['kind']}'")

    if weight["kind"] == "poincare" and weight["seed_exponent"] % 2 == 1:
        raise ConfigError("Odd seed exponents give the zero differential")

    if weight["kind"] == "file" and not weight["path"]:
        raise ConfigError("Weight kind 'file' needs a path")

    if settings["meshSettings"]["quadrature_order"] not in (1, 3, 7):
        raise ConfigError("Quadrature order must be 1, 3 or 7")

    t_list = settings["mountainPassSettings"]["t_list"]

    if not isinstance(t_list, list) or any(
        isinstance(t, bool) or not isinstance(t, (int, float)) or t <= 0.0 for t in t_list
    ):
        raise ConfigError("Mountain-pass t_list must be a list of positive numbers")

    if not isinstance(settings["seed"], int) or isinstance(settings["seed"], bool):
        raise ConfigError("Seed must be an integer")

    return settings


def load_run_settings(path):
    """Load run settings from a JSON file, merged over the defaults."""
    defaults = get_default_run_settings()

    if not path:
        return defaults

    if not os.path.exists(path):
        raise ConfigError(f"Settings file not found: {path}")

    with open(path, "r", encoding="utf-8") as f:
        try:
            overrides = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Settings file {path} is not valid JSON: {e}") from e

    if not isinstance(overrides, dict):
        raise ConfigError("Settings file must hold a JSON object")

    return merge_run_settings(defaults, overrides)


def save_run_settings(path, settings):
    """Save run settings to a JSON file."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(canonical_json(settings, indent=2))
        f.write("\n")


def canonical_json(data, indent=None):
    if indent is None:
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    return json.dumps(data, sort_keys=True, indent=indent)


def config_hash(settings):
    """SHA-256 of the settings that fix the problem and its numerics.

    Output location, the mountain-pass t-list and the certify request pick
    what to compute, so artifacts stay comparable across them.
    """
    settings = copy.deepcopy(settings)
    settings.pop("outputSettings", None)
    settings.pop("certifySettings", None)
    settings.get("mountainPassSettings", {}).pop("t_list", None)
    return hashlib.sha256(canonical_json(settings).encode("utf-8")).hexdigest()


def apply_cli_overrides(settings, output_dir=None, refine=None, seed=None, t_list=None):
    """Command-line flags take precedence over the loaded file."""
    settings = copy.deepcopy(settings)

    if output_dir is not None:
        settings["outputSettings"]["output_dir"] = output_dir

    if refine is not None:
        settings["meshSettings"]["refinement_level"] = refine

    if seed is not None:
        settings["seed"] = seed

    if t_list is not None:
        settings["mountainPassSettings"]["t_list"] = t_list

    return settings


def parse_t_list(text):
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"Invalid t-list '{text}'") from e

    return values
