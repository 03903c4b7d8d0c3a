"""
Configuration system for secest.
Supports YAML experiment configurations with environment variable overrides.
"""

import os
import copy
import logging
from pathlib import Path
from typing import Dict, Any, Optional

import yaml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent.parent / "config" / "secest_config.yaml"


class ConfigurationError(Exception):
    """Exception raised for configuration-related errors"""
    pass


class SecestConfig:
    """
    Configuration loader that supports:
    - YAML experiment configurations merged over built-in defaults
    - Environment variable overrides (read through python-dotenv)
    - Dot-notation access to nested values
    """

    _current_config: Optional[Dict[str, Any]] = None
    _current_path: Optional[str] = None

    _defaults = {
        'solver': {
            'feas_tol': 1e-8,
            'opt_tol': 1e-8,
            'max_iters': 10000,
            'pivot_rule': 'dantzig',
            'degenerate_switch': 50,
        },
        'decoder': {
            'method': 'qr',
            'support_tol': 1e-5,
            'success_tol': 1e-4,
            'rank_tol': 1e-9,
        },
        'attacks': {
            'amplitude': 10.0,
            'ramp_slope': 0.1,
            'ramp_target': 0,
            'sinusoid_amplitude': 5.0,
            'sinusoid_period': 100,
            'roving_std': 1.0,
        },
        'kalman': {
            'p0_scale': 10.0,
            'r_inflation': 1.0,
        },
        'design': {
            'max_shift': 0.1,
            'iterations': 200,
            'q_scale': 1.0,
            'r_scale': 1.0,
        },
        'montecarlo': {
            'n': 8,
            'p': 10,
            'window': 8,
            'sources': ['ideal_gaussian_coding', 'designed_feedback', 'poor_feedback'],
            's_range': None,
            's_step': 4,
            'trials_per_point': 100,
            'full_trials': 500,
            'ordering_tolerance': 0.07,
        },
        'uav': {
            'ts': 0.05,
            'g': 9.81,
            'mass': 0.65,
            'k_t': 0.91,
            'rot_nat_freq': 9.0,
            'rot_damping': 0.85,
            'steps': 200,
            'n_y': 5,
            'proc_std': 0.01,
            'pos_vel_std': 0.05,
            'angle_std': 0.01,
            'window': 10,
            'max_pole': 0.8,
            'waypoints': None,
            'methods': ['kf', 'se', 'se+kf'],
        },
        'execution': {
            'threads': 4,
            'seed': 0,
        },
        'reporting': {
            'formats': ['json', 'csv'],
            'output_dir': 'results',
        },
    }

    @classmethod
    def load_config(cls, config_path: Optional[str] = None) -> Dict[str, Any]:
        """
        Load an experiment configuration.

        Args:
            config_path: Optional path to a YAML file. If not provided, the
                         bundled config/secest_config.yaml is used when present,
                         otherwise the built-in defaults.

        Returns:
            Dictionary containing the merged configuration
        """
        path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH

        if config_path and not path.exists():
            raise ConfigurationError(f"Config not found: {path}")

        loaded: Dict[str, Any] = {}
        if path.exists():
            try:
                with open(path, 'r', encoding='utf-8') as f:
                    loaded = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigurationError(f"Invalid YAML in {path}: {e}")
            if not isinstance(loaded, dict):
                raise ConfigurationError(f"Top level of {path} must be a mapping")
            logger.info(f"Loaded configuration from: {path}")

        config = cls._deep_merge(copy.deepcopy(cls._defaults), loaded)
        config = cls._apply_env_overrides(config)
        cls._validate_config(config)

        cls._current_config = config
        cls._current_path = str(path)
        return config

    @classmethod
    def _deep_merge(cls, base: Dict, override: Dict) -> Dict:
        """Recursively merge two dictionaries"""
        result = base.copy()

        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = cls._deep_merge(result[key], value)
            else:
                result[key] = value

        return result

    @classmethod
    def _apply_env_overrides(cls, config: Dict[str, Any]) -> Dict[str, Any]:
        """Apply environment variable overrides to configuration"""
        load_dotenv()

        try:
            if os.getenv('SECEST_SEED'):
                config.setdefault('execution', {})['seed'] = int(os.getenv('SECEST_SEED'))

            if os.getenv('SECEST_THREADS'):
                config.setdefault('execution', {})['threads'] = int(os.getenv('SECEST_THREADS'))

            if os.getenv('SECEST_TRIALS'):
                config.setdefault('montecarlo', {})['trials_per_point'] = int(os.getenv('SECEST_TRIALS'))
        except ValueError as e:
            raise ConfigurationError(f"Invalid integer in environment override: {e}")

        if os.getenv('SECEST_LOG_LEVEL'):
            config.setdefault('execution', {})['log_level'] = os.getenv('SECEST_LOG_LEVEL').upper()

        if os.getenv('SECEST_OUTPUT_DIR'):
            config.setdefault('reporting', {})['output_dir'] = os.getenv('SECEST_OUTPUT_DIR')

        return config

    @classmethod
    def _validate_config(cls, config: Dict[str, Any]) -> None:
        """Validate value types and ranges of the merged configuration"""
        for section in cls._defaults:
            if not isinstance(config.get(section), dict):
                raise ConfigurationError(f"Config section '{section}' must be a mapping")

        solver = config['solver']
        for key in ('feas_tol', 'opt_tol'):
            if not isinstance(solver[key], (int, float)) or solver[key] <= 0:
                raise ConfigurationError(f"solver.{key} must be a positive number, got {solver[key]!r}")
        if solver['pivot_rule'] not in ('dantzig', 'bland'):
            raise ConfigurationError(f"solver.pivot_rule must be 'dantzig' or 'bland', got {solver['pivot_rule']!r}")

        if config['decoder']['method'] not in ('qr', 'direct'):
            raise ConfigurationError(f"decoder.method must be 'qr' or 'direct', got {config['decoder']['method']!r}")

        if int(config['execution']['threads']) < 1:
            raise ConfigurationError("execution.threads must be at least 1")

        mc = config['montecarlo']
        if int(mc['trials_per_point']) < 1:
            raise ConfigurationError("montecarlo.trials_per_point must be at least 1")

        if config['uav']['n_y'] not in (3, 5, 8):
            raise ConfigurationError(f"uav.n_y must be 3, 5 or 8, got {config['uav']['n_y']!r}")

    @classmethod
    def get(cls, key: str, default=None, config: Optional[Dict[str, Any]] = None):
        """Get configuration value using dot notation"""
        if config is None:
            if cls._current_config is None:
                cls.load_config()
            config = cls._current_config

        value: Any = config
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    @classmethod
    def defaults(cls) -> Dict[str, Any]:
        """Deep copy of the built-in defaults"""
        return copy.deepcopy(cls._defaults)

