import logging
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

from hullwalk import config
from hullwalk.errors import ConfigError


class TestEnvironment(unittest.TestCase):
    """Tests for environment fallbacks."""

    def setUp(self):
        """Set up a temporary directory."""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up the temporary directory and logging handlers."""
        logging.getLogger('hullwalk').handlers = []
        shutil.rmtree(self.temp_dir)

    @patch.dict(os.environ, {}, clear=True)
    def test_defaults(self):
        """Test defaults when nothing is set."""
        self.assertEqual(config.env_seed(), 0)
        self.assertEqual(config.env_jobs(), 1)

    @patch.dict(os.environ, {"HULLWALK_SEED": "0x10", "HULLWALK_JOBS": "3"}, clear=True)
    def test_values(self):
        """Test parsed environment values."""
        self.assertEqual(config.env_seed(), 16)
        self.assertEqual(config.env_jobs(), 3)

    @patch.dict(os.environ, {"HULLWALK_SEED": "abc", "HULLWALK_JOBS": "0"}, clear=True)
    def test_bad_values(self):
        """Test that malformed values raise ConfigError."""
        with self.assertRaises(ConfigError):
            config.env_seed()
        with self.assertRaises(ConfigError):
            config.env_jobs()

    @patch.dict(os.environ, {}, clear=True)
    def test_env_file(self):
        """Test loading a .env file without overriding the environment."""
        env_file = os.path.join(self.temp_dir, ".env")
        with open(env_file, "w") as f:
            f.write("HULLWALK_SEED=42\n")
        self.assertTrue(config.load_environment(env_file))
        self.assertEqual(config.env_seed(), 42)
        self.assertFalse(config.load_environment(os.path.join(self.temp_dir, "missing.env")))

    def test_setup_logging(self):
        """Test console and rotating file handlers."""
        log_file = os.path.join(self.temp_dir, "logs", "hullwalk.log")
        logger = config.setup_logging(verbose=True, log_file=log_file)
        self.assertEqual(logger.level, logging.DEBUG)
        self.assertEqual(len(logger.handlers), 2)
        self.assertTrue(os.path.exists(os.path.dirname(log_file)))


class TestRunConfig(unittest.TestCase):
    """Tests for run configuration."""

    @patch.dict(os.environ, {}, clear=True)
    def test_build(self):
        """Test allowed keys, seed masking and echo."""
        cfg = config.RunConfig.build("absorb", {"n": 3}, ("n", "trials"), seed=-1, jobs=2)
        self.assertEqual(cfg.seed, (1 << 64) - 1)
        self.assertEqual(cfg.echo(), {"n": 3, "seed": cfg.seed})
        self.assertEqual(cfg.jobs, 2)

    @patch.dict(os.environ, {"HULLWALK_SEED": "5"}, clear=True)
    def test_seed_from_environment(self):
        """Test the HULLWALK_SEED fallback."""
        self.assertEqual(config.RunConfig.build("check", {}, ()).seed, 5)

    def test_unknown_key(self):
        """Test that unknown parameters are rejected."""
        with self.assertRaises(ConfigError):
            config.RunConfig.build("absorb", {"bogus": 1}, ("n",), seed=0, jobs=1)

    def test_bad_format_and_jobs(self):
        """Test format and job validation."""
        with self.assertRaises(ConfigError):
            config.RunConfig("absorb", fmt="xml")
        with self.assertRaises(ConfigError):
            config.RunConfig("absorb", jobs=0)


if __name__ == "__main__":
    unittest.main()
