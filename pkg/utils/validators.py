"""
Input Validation Module
Startup and request validation for the engine

Features:
- Configuration checks against the files and endpoints a run needs
"""

import os
from pathlib import Path
from typing import List

from config.settings import EngineConfig


class ValidationHelper:
    """Input validation returning human-readable error lists"""

    def __init__(self, config: EngineConfig):
        self.config = config

    def validate_engine_config(self, need_kg: bool = True, need_indexes: bool = True) -> List[str]:
        """
        Startup validation of the engine configuration

        Returns:
            List of validation error messages
        """
        errors = []

        # Stored artifacts
        errors.extend(self._validate_paths(need_kg, need_indexes))

        # Provider wiring
        errors.extend(self._validate_providers())

        return errors

    def _validate_paths(self, need_kg: bool, need_indexes: bool) -> List[str]:
        errors = []
        paths = self.config.paths

        if need_kg and not Path(paths.kg).is_file():
            errors.append(f"Knowledge graph file not found: {paths.kg}")
        if need_kg and not Path(paths.catalog).is_file():
            errors.append(f"Meta-path catalog not found: {paths.catalog} (run ingest first)")
        if need_indexes and not Path(paths.indexes_dir).is_dir():
            errors.append(f"Index directory not found: {paths.indexes_dir} (run index first)")
        if paths.references and not Path(paths.references).is_file():
            errors.append(f"Reference trajectory file not found: {paths.references}")
        if paths.mock_script and not Path(paths.mock_script).is_file():
            errors.append(f"Mock script not found: {paths.mock_script}")
        if paths.cohort and not Path(paths.cohort).is_file():
            errors.append(f"Cohort file not found: {paths.cohort}")

        return errors

    def _validate_providers(self) -> List[str]:
        errors = []
        provider = self.config.provider

        if provider.mode == 'http':
            if not provider.llm_endpoint:
                errors.append("provider.llm_endpoint is required in http mode")
            if provider.api_key_env and provider.api_key_env not in os.environ:
                errors.append(f"Environment variable {provider.api_key_env} is not set")

        if provider.embedding_mode == 'http' and not provider.embedding_endpoint:
            errors.append("provider.embedding_endpoint is required for http embeddings")
        if provider.embedding_mode == 'precomputed':
            if not provider.embeddings_file:
                errors.append("provider.embeddings_file is required for precomputed embeddings")
            elif not Path(provider.embeddings_file).is_file():
                errors.append(f"Embeddings file not found: {provider.embeddings_file}")

        return errors

