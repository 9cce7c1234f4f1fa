class DistillragError(RuntimeError):
    """Raised for every failure reported by the native core.

    ``code`` is the error code name (``"EmptyQuery"``, ``"Aborted"`` ...) and
    ``step`` names the pipeline step when one applies.
    """

    def __init__(self, code, message, step=None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.step = step

    def __str__(self):
        where = f" [{self.step}]" if self.step else ""
        return f"{self.code}{where}: {self.message}"
