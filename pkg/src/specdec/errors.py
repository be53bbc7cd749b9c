"""Exception types shared across the package."""


class InputError(ValueError):
    """An argument violates an operation's contract (bad value, mismatched
    vocabularies, malformed config)."""


class LosslessnessError(RuntimeError):
    """Speculative output diverged from the baseline greedy output.

    This should be impossible; if raised it carries the (seed, cell, prompt)
    triple needed to reproduce the failing decode.
    """

    def __init__(self, seed: int, cell: str, prompt: tuple[int, ...]) -> None:
        self.seed = seed
        self.cell = cell
        self.prompt = prompt
        super().__init__(
            f"speculative output differs from baseline (seed={seed}, "
            f"cell={cell}, prompt={prompt})"
        )
