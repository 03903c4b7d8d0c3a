# Application scenarios package
