# Diagnostics package
