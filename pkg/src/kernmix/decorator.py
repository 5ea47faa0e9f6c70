from kernmix.registry import MethodRegistry


def register(cls):
    """Convenience decorator to make a fit method available by name to
    benchmarks and the command line

    Example:

    ```python
    from kernmix import FitMethod, register

    @register
    class MyMethod(FitMethod):
        name = "my-method"

        def fit(self, series, K, seed):
            ...
    ```
    """
    MethodRegistry().register(cls)
    return cls
