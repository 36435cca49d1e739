"""Error type shared by every stage of the pipeline."""


class OvlmError(ValueError):
    """Data error carrying a short machine-readable ``code``.

    The CLI maps any ``OvlmError`` to exit status 2 and prints the code.
    """

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)
