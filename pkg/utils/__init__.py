# Shared settings and logging
