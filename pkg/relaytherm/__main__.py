from relaytherm.cli import main

raise SystemExit(main())
