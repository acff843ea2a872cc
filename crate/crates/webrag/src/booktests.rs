// Book chapters compile as doctests; modules are wired in once chapters exist.
