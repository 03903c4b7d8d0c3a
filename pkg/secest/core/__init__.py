# Core estimation modules package
