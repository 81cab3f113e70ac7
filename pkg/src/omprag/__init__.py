"""Retrieval-grounded OpenMP parallelization pipeline for serial C++ code.

Submodules map onto pipeline stages: corpus ingestion (`corpus`), text
embedding (`embedding`), exact vector retrieval (`index`), prompt assembly
(`prompt`), chat-completion clients (`generation`), compile gating and
differential validation (`validation`), thread-scaling benchmarks
(`bench`), snippet harvesting (`harvest`), and orchestration
(`pipeline`, `cli`).
"""

__version__ = "0.1.0"
