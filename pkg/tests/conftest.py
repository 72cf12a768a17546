import hypothesis

# derandomized so failures reproduce exactly; no deadline because jitted
# kernels compile on first call inside some properties
hypothesis.settings.register_profile(
    "repo", derandomize=True, max_examples=100, deadline=None
)
hypothesis.settings.load_profile("repo")
