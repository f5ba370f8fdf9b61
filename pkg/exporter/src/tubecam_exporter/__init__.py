from .export import ExportError, ExportJob, main, run_export

__all__ = ["ExportError", "ExportJob", "main", "run_export"]
