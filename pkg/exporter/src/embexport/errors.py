"""Error taxonomy; every CLI failure maps to one code."""


class ExportError(Exception):
    code = "export"


class CorpusError(ExportError):
    code = "corpus"


class ModelLoadError(ExportError):
    code = "model"


class DimDriftError(ExportError):
    code = "dim"


class JobError(ExportError):
    code = "config"
