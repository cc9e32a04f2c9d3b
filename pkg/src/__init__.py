# Package marker for the BSDA-Net runtime library.
