from dshadow.cli import main

raise SystemExit(main())
