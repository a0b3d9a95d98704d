/** Error types the adapter surfaces to the training loop. */

/** A record line could not be used; carries the 1-based line number. */
export class RecordFormatError extends Error {
  constructor(
    message: string,
    readonly line: number,
  ) {
    super(`${message} (line ${line})`);
    this.name = 'RecordFormatError';
  }
}

/** A record declares a format version this adapter does not speak. */
export class SchemaVersionMismatchError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'SchemaVersionMismatchError';
  }
}

/** The reward service is unreachable or replied outside its contract. */
export class ServiceUnavailableError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ServiceUnavailableError';
  }
}

/** The service rejected the group as too small (not an availability issue). */
export class GroupTooSmallError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'GroupTooSmallError';
  }
}
