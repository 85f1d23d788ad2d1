"""Find semantically similar test steps and test cases written in natural language."""

__version__ = "0.1.0"
